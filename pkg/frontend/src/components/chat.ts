import { ApiClient, ApiError } from "../api.js";
import type { Annotation, Trace } from "../types.js";
import { PlanEditor, annotationView } from "./planEditor.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface ChatViewOptions {
  /** Seed source for generation; injectable for reproducible tests. */
  seedFn?: () => number;
  autoGenerate?: boolean;
}

/** Two-phase chat console: send -> inspect/edit plan -> generate. */
export class ChatView {
  readonly element: HTMLElement;
  private history: HTMLElement;
  private understoodPanel: HTMLElement;
  private planPanel: HTMLElement;
  private tracePanel: HTMLElement;
  private errorBanner: HTMLElement;
  private input: HTMLInputElement;
  private sendButton: HTMLButtonElement;
  private generateButton: HTMLButtonElement;
  private regenerateButton: HTMLButtonElement;
  private autoToggle: HTMLInputElement;

  private editor: PlanEditor | null = null;
  private busy = false;
  private lastSeed = 0;
  private currentCompare: HTMLElement | null = null;
  private retryAction: (() => Promise<void>) | null = null;
  private seedFn: () => number;

  constructor(
    private client: ApiClient,
    private sessionId: string,
    options: ChatViewOptions = {},
  ) {
    this.seedFn = options.seedFn ?? (() => Math.floor(Math.random() * 2 ** 31));
    this.element = el("div", "chat-view");

    const header = el("div", "chat-header");
    header.append(el("span", "session-label", `session ${sessionId}`));
    const toggleLabel = el("label", "auto-toggle");
    this.autoToggle = el("input");
    this.autoToggle.type = "checkbox";
    this.autoToggle.checked = options.autoGenerate ?? false;
    toggleLabel.append(this.autoToggle, el("span", undefined, " auto-generate"));
    header.append(toggleLabel);

    this.history = el("div", "chat-history");
    this.errorBanner = el("div", "error-banner");
    this.errorBanner.hidden = true;
    this.understoodPanel = el("div", "understood-panel");
    this.planPanel = el("div", "plan-panel");
    this.tracePanel = el("div", "trace-panel");

    const inputRow = el("div", "input-row");
    this.input = el("input", "message-input");
    this.input.placeholder = "say something…";
    this.sendButton = el("button", "send-button", "Send");
    this.sendButton.type = "button";
    this.sendButton.disabled = true;
    this.input.addEventListener("input", () => {
      this.sendButton.disabled = this.busy || this.input.value.trim() === "";
    });
    this.input.addEventListener("keydown", (event) => {
      if (event.key === "Enter" && !this.sendButton.disabled) void this.send();
    });
    this.sendButton.addEventListener("click", () => void this.send());

    this.generateButton = el("button", "generate-button", "Generate");
    this.generateButton.type = "button";
    this.generateButton.hidden = true;
    this.generateButton.addEventListener("click", () => void this.generate());
    this.regenerateButton = el("button", "regenerate-button", "Regenerate with same plan");
    this.regenerateButton.type = "button";
    this.regenerateButton.hidden = true;
    this.regenerateButton.addEventListener("click", () => void this.regenerate());
    for (const type of ["change", "click", "keyup"]) {
      this.planPanel.addEventListener(type, () => this.refreshRegenerateLabel());
    }

    inputRow.append(this.input, this.sendButton, this.generateButton, this.regenerateButton);
    this.element.append(
      header,
      this.history,
      this.errorBanner,
      this.understoodPanel,
      this.planPanel,
      this.tracePanel,
      inputRow,
    );
  }

  private setBusy(busy: boolean): void {
    this.busy = busy;
    this.sendButton.disabled = busy || this.input.value.trim() === "";
    this.generateButton.disabled = busy;
    this.regenerateButton.disabled = busy;
  }

  private showError(message: string, retry: () => Promise<void>): void {
    this.retryAction = retry;
    this.errorBanner.hidden = false;
    this.errorBanner.textContent = "";
    this.errorBanner.append(el("span", "error-text", message));
    const retryButton = el("button", "retry-button", "Retry");
    retryButton.type = "button";
    retryButton.addEventListener("click", () => {
      const action = this.retryAction;
      if (action) void action();
    });
    this.errorBanner.append(retryButton);
  }

  private clearError(): void {
    this.errorBanner.hidden = true;
    this.retryAction = null;
  }

  private appendBubble(speaker: "human" | "machine", text: string): void {
    const bubble = el("div", `bubble ${speaker}`, text);
    this.history.append(bubble);
  }

  async send(): Promise<void> {
    const text = this.input.value.trim();
    if (!text || this.busy) return;
    this.clearError();
    this.setBusy(true);
    try {
      const reply = await this.client.postMessage(this.sessionId, text);
      this.appendBubble("human", text);
      this.input.value = "";
      this.understoodPanel.textContent = "";
      this.understoodPanel.append(
        el("div", "panel-title", "understood"),
        annotationView(reply.understood, "understood-view"),
      );
      this.planPanel.textContent = "";
      this.planPanel.append(el("div", "panel-title", "proposed plan (editable)"));
      this.editor = new PlanEditor(
        reply.proposed_plan ?? { emotions: [], dialogue_acts: [], topical_words: [] },
      );
      this.planPanel.append(this.editor.element);
      this.generateButton.hidden = false;
      this.regenerateButton.hidden = true;
      this.setBusy(false);
      if (this.autoToggle.checked) await this.generate();
    } catch (error) {
      this.setBusy(false);
      this.showError(describe(error), () => this.send());
    }
  }

  /** Plan override derived from the editor: present only when edited. */
  private pendingOverride(): Annotation | undefined {
    if (!this.editor) return undefined;
    return this.editor.isDirty() ? this.editor.current() : undefined;
  }

  private refreshRegenerateLabel(): void {
    if (this.regenerateButton.hidden) return;
    this.regenerateButton.textContent = this.pendingOverride()
      ? "Regenerate with edited plan"
      : "Regenerate with same plan";
  }

  async generate(): Promise<Trace | undefined> {
    if (this.busy || !this.editor) return undefined;
    return this.runGeneration({ regenerate: false, seed: this.seedFn() });
  }

  /** Re-decode the last turn; picks up plan edits made since the last run. */
  async regenerate(seed?: number): Promise<Trace | undefined> {
    if (this.busy) return undefined;
    return this.runGeneration({ regenerate: true, seed: seed ?? this.seedFn() });
  }

  private async runGeneration(options: {
    regenerate: boolean;
    seed: number;
  }): Promise<Trace | undefined> {
    this.clearError();
    this.setBusy(true);
    const override = this.pendingOverride();
    try {
      const trace = await this.client.generate(this.sessionId, {
        plan_override: override,
        seed: options.seed,
        regenerate: options.regenerate || undefined,
      });
      this.lastSeed = options.seed;
      this.afterGeneration(trace, options.regenerate);
      return trace;
    } catch (error) {
      this.setBusy(false);
      this.showError(describe(error), async () => {
        await this.runGeneration(options);
      });
      return undefined;
    }
  }

  private afterGeneration(trace: Trace, replacedTurn: boolean): void {
    if (replacedTurn) {
      this.history.querySelector(".bubble.machine:last-of-type")?.remove();
    } else {
      this.currentCompare = el("div", "trace-compare");
      this.tracePanel.append(this.currentCompare);
    }
    this.appendBubble("machine", trace.response);
    (this.currentCompare ?? this.tracePanel).append(traceCard(trace));
    this.generateButton.hidden = true;
    this.regenerateButton.hidden = false;
    this.refreshRegenerateLabel();
    this.setBusy(false);
  }
}

function traceCard(trace: Trace): HTMLElement {
  const card = el("details", "trace-card");
  const summary = el("summary", "trace-summary");
  summary.append(
    el("span", "trace-overridden", trace.plan_overridden ? "plan overridden" : "model plan"),
    el("span", "trace-seed", ` seed ${trace.seed}`),
  );
  card.append(summary);
  card.append(el("div", "panel-title", "planned"), annotationView(trace.planned, "planned-view"));
  if (trace.understood) {
    card.append(
      el("div", "panel-title", "understood"),
      annotationView(trace.understood, "understood-view"),
    );
  }
  const spans = el("div", "trace-spans");
  const surfaces = trace.span_surfaces ?? {};
  for (const [stage, tokens] of Object.entries(surfaces)) {
    const row = el("div", "trace-span-row");
    row.append(el("span", "trace-span-stage", stage), el("code", "trace-span-tokens", tokens.join(" ")));
    spans.append(row);
  }
  card.append(spans);
  return card;
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.code}: ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}
