import { ApiClient } from "./api.js";
import { ChatView } from "./components/chat.js";

function baseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  if (fromQuery) {
    window.localStorage.setItem("semchat-api", fromQuery);
    return fromQuery;
  }
  return window.localStorage.getItem("semchat-api") ?? "http://127.0.0.1:8000";
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const client = new ApiClient(baseUrl());
  try {
    const sessionId = await client.createSession();
    root.textContent = "";
    root.append(new ChatView(client, sessionId).element);
  } catch (error) {
    root.textContent = `could not reach the service at ${client.baseUrl}: ${String(error)}`;
  }
}

void boot();
