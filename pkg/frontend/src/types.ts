// Wire types mirroring the service's JSON bodies.

export interface Annotation {
  emotions: string[];
  dialogue_acts: string[];
  // phrases arrive as token lists; edited plans may send plain strings,
  // which the service tokenizes.
  topical_words: (string[] | string)[];
}

export interface MessageReply {
  understood: Annotation | null;
  understood_valid: boolean;
  proposed_plan: Annotation | null;
  proposed_plan_valid: boolean;
  spans: { understanding: string[]; planning: string[] };
}

export interface Trace {
  understood: Annotation | null;
  planned: Annotation | null;
  plan_overridden: boolean;
  response: string;
  spans: Record<string, number[]>;
  span_surfaces?: Record<string, string[]>;
  seed: number;
  understood_valid: boolean;
  planned_valid: boolean;
}

export interface HistoryEntry {
  speaker: "human" | "machine";
  text: string;
  annotation: Annotation | null;
}

export interface SessionView {
  session_id: string;
  context: string;
  history: HistoryEntry[];
  traces: Trace[];
  pending: boolean;
  policy: unknown;
}

export interface GenerateRequest {
  plan_override?: Annotation;
  seed?: number;
  regenerate?: boolean;
}

/** One rendered turn: what the service knew, planned, and said. */
export interface TurnView {
  speaker: "human" | "machine";
  text: string;
  understood?: Annotation | null;
  plan?: Annotation | null;
  overridden?: boolean;
}

export function phraseText(phrase: string[] | string): string {
  return typeof phrase === "string" ? phrase : phrase.join(" ");
}
