import { DA_LABELS, EMOTION_LABELS } from "../labels.js";
import { phraseText, type Annotation } from "../types.js";

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

function labelPicker(options: readonly string[], value: string, className: string): HTMLSelectElement {
  const select = el("select", className);
  for (const option of options) {
    const opt = el("option");
    opt.value = option;
    opt.textContent = option;
    select.append(opt);
  }
  select.value = value;
  return select;
}

/** Editable proposed plan: label pickers for emotions/acts, chips for topics. */
export class PlanEditor {
  readonly element: HTMLElement;
  private original: { emotions: string[]; acts: string[]; topics: string[] };
  private emotionRows: HTMLElement;
  private actRows: HTMLElement;
  private chipRow: HTMLElement;
  private chipInput: HTMLInputElement;

  constructor(plan: Annotation) {
    this.original = {
      emotions: [...plan.emotions],
      acts: [...plan.dialogue_acts],
      topics: plan.topical_words.map(phraseText),
    };
    this.element = el("div", "plan-editor");

    this.emotionRows = el("div", "picker-rows emotion-rows");
    this.actRows = el("div", "picker-rows act-rows");
    this.chipRow = el("div", "chip-row");
    this.chipInput = el("input", "chip-input");
    this.chipInput.placeholder = "add topical word…";
    this.chipInput.addEventListener("keydown", (event) => {
      if (event.key === "Enter") {
        event.preventDefault();
        this.addChipFromInput();
      }
    });
    const addChip = el("button", "chip-add", "+");
    addChip.type = "button";
    addChip.addEventListener("click", () => this.addChipFromInput());

    this.element.append(
      this.section("emotions (one per sentence)", this.emotionRows, () =>
        this.addPickerRow(this.emotionRows, EMOTION_LABELS, "None"),
      ),
      this.section("dialogue acts (one per sentence)", this.actRows, () =>
        this.addPickerRow(this.actRows, DA_LABELS, "Inform"),
      ),
    );
    const topicSection = el("div", "plan-section");
    topicSection.append(el("div", "plan-section-title", "topical words"), this.chipRow);
    const inputRow = el("div", "chip-input-row");
    inputRow.append(this.chipInput, addChip);
    topicSection.append(inputRow);
    this.element.append(topicSection);

    for (const emotion of this.original.emotions) {
      this.addPickerRow(this.emotionRows, EMOTION_LABELS, emotion);
    }
    for (const act of this.original.acts) {
      this.addPickerRow(this.actRows, DA_LABELS, act);
    }
    for (const topic of this.original.topics) this.addChip(topic);
  }

  private section(title: string, rows: HTMLElement, onAdd: () => void): HTMLElement {
    const wrap = el("div", "plan-section");
    const head = el("div", "plan-section-title", title);
    const add = el("button", "picker-add", "+");
    add.type = "button";
    add.addEventListener("click", onAdd);
    head.append(add);
    wrap.append(head, rows);
    return wrap;
  }

  private addPickerRow(rows: HTMLElement, options: readonly string[], value: string): void {
    const row = el("div", "picker-row");
    const picker = labelPicker(
      options,
      value,
      options === EMOTION_LABELS ? "emotion-picker" : "da-picker",
    );
    const remove = el("button", "picker-remove", "×");
    remove.type = "button";
    remove.addEventListener("click", () => row.remove());
    row.append(picker, remove);
    rows.append(row);
  }

  private addChipFromInput(): void {
    const text = this.chipInput.value.trim();
    if (!text) return;
    this.addChip(text);
    this.chipInput.value = "";
  }

  addChip(text: string): void {
    const chip = el("span", "chip");
    chip.append(el("span", "chip-text", text));
    const remove = el("button", "chip-remove", "×");
    remove.type = "button";
    remove.addEventListener("click", () => chip.remove());
    chip.append(remove);
    this.chipRow.append(chip);
  }

  topics(): string[] {
    return Array.from(this.chipRow.querySelectorAll(".chip-text")).map(
      (node) => node.textContent ?? "",
    );
  }

  current(): Annotation {
    return {
      emotions: Array.from(this.emotionRows.querySelectorAll("select")).map((s) => s.value),
      dialogue_acts: Array.from(this.actRows.querySelectorAll("select")).map((s) => s.value),
      topical_words: this.topics(),
    };
  }

  isDirty(): boolean {
    const now = this.current();
    return (
      JSON.stringify([now.emotions, now.dialogue_acts, now.topical_words]) !==
      JSON.stringify([this.original.emotions, this.original.acts, this.original.topics])
    );
  }
}

/** Read-only rendering of an annotation (used for the understood panel). */
export function annotationView(annotation: Annotation | null, className: string): HTMLElement {
  const wrap = el("div", `annotation-view ${className}`);
  if (!annotation) {
    wrap.append(el("div", "annotation-empty", "(none)"));
    return wrap;
  }
  const rows: [string, string][] = [
    ["emotions", annotation.emotions.join(", ") || "—"],
    ["acts", annotation.dialogue_acts.join(", ") || "—"],
    ["topics", annotation.topical_words.map(phraseText).join(", ") || "—"],
  ];
  for (const [name, value] of rows) {
    const row = el("div", "annotation-row");
    row.append(el("span", "annotation-key", name), el("span", "annotation-value", value));
    wrap.append(row);
  }
  return wrap;
}
