// DOM rendering for the three participant screens: initial categorization,
// speaker naming, and listener accept/reject with the post-decision edit
// window. Patches come from the server as PNGs so both participants see
// byte-identical stimuli.

import { Label, LABELS, stimulusPngUrl } from "./protocol.js";
import { ViewMachine } from "./state.js";

export interface UiContext {
  httpBase: string;
  sessionId: string;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(root: HTMLElement, machine: ViewMachine, ctx: UiContext): void {
  const view = machine.view;
  root.textContent = "";

  const header = el("div", { class: "header" });
  header.append(
    el("strong", {}, `session ${ctx.sessionId}`),
    el("span", {}, ` · you are ${machine.participantId}`),
    el("span", { class: "phase" }, ` · ${view.phase}`),
  );
  root.append(header);

  if (view.notice) {
    root.append(el("div", { class: "notice" }, view.notice));
  }

  switch (view.phase) {
    case "connecting":
    case "lobby":
      root.append(el("p", {}, "waiting for both participants to join..."));
      break;
    case "categorize":
      renderCategorize(root, machine, ctx);
      break;
    case "speak":
      renderSpeak(root, machine, ctx);
      break;
    case "decide":
      renderDecide(root, machine, ctx);
      break;
    case "edit_window":
      renderEditWindow(root, machine, ctx);
      break;
    case "waiting":
      root.append(el("p", {}, "waiting for your partner..."));
      break;
    case "complete":
      root.append(el("h2", {}, "session complete — thank you!"));
      break;
  }
}

function patchImg(ctx: UiContext, datasetId: string, index: number, size = 96): HTMLImageElement {
  const img = el("img", {
    src: stimulusPngUrl(ctx.httpBase, ctx.sessionId, datasetId, index, size),
    width: String(size),
    height: String(size),
    class: "patch",
  });
  return img;
}

function labelButtons(current: Label | undefined, pick: (label: Label) => void): HTMLElement {
  const row = el("div", { class: "labels" });
  for (const label of LABELS) {
    const btn = el("button", { class: current === label ? "label active" : "label" }, label);
    btn.addEventListener("click", () => pick(label));
    row.append(btn);
  }
  return row;
}

function renderCategorize(root: HTMLElement, machine: ViewMachine, ctx: UiContext): void {
  const view = machine.view;
  root.append(
    el("h2", {}, `classify all ${view.manifest?.stimuli.length ?? 0} colors into A–E`),
  );
  const grid = el("div", { class: "grid" });
  view.manifest?.stimuli.forEach((_, i) => {
    const cell = el("div", { class: "cell" });
    cell.append(patchImg(ctx, view.datasetId!, i));
    cell.append(labelButtons(view.labels.get(i), (label) => machine.assignLabel(i, label)));
    grid.append(cell);
  });
  root.append(grid);
  const submit = el("button", { class: "submit" }, "submit categorization");
  if (!machine.categorizationComplete() || view.submitted) {
    submit.setAttribute("disabled", "disabled");
  }
  submit.addEventListener("click", () => machine.submitInitial());
  root.append(submit);
}

function renderSpeak(root: HTMLElement, machine: ViewMachine, ctx: UiContext): void {
  const trial = machine.view.trial!;
  root.append(el("h2", {}, `round ${trial.round}: name this color`));
  root.append(patchImg(ctx, trial.datasetId, trial.stimulusIndex, 192));
  root.append(
    el("p", {}, `your categorization: ${machine.view.labels.get(trial.stimulusIndex) ?? "?"}`),
  );
  root.append(labelButtons(undefined, (label) => machine.propose(label)));
  root.append(editOtherHint(root, machine));
}

function renderDecide(root: HTMLElement, machine: ViewMachine, ctx: UiContext): void {
  const trial = machine.view.trial!;
  root.append(el("h2", {}, `round ${trial.round}: your partner calls this "${trial.proposal}"`));
  root.append(patchImg(ctx, trial.datasetId, trial.stimulusIndex, 192));
  const row = el("div", { class: "decide" });
  const accept = el("button", { class: "accept" }, "accept");
  accept.addEventListener("click", () => machine.decide(true));
  const reject = el("button", { class: "reject" }, "reject");
  reject.addEventListener("click", () => machine.decide(false));
  row.append(accept, reject);
  root.append(row);
}

function renderEditWindow(root: HTMLElement, machine: ViewMachine, ctx: UiContext): void {
  const view = machine.view;
  const trial = view.trial!;
  root.append(el("h2", {}, "you may revise your categorization"));
  const grid = el("div", { class: "grid small" });
  view.manifest?.stimuli.forEach((_, i) => {
    const cell = el("div", { class: i === trial.stimulusIndex ? "cell decided" : "cell" });
    cell.append(patchImg(ctx, view.datasetId!, i, 64));
    cell.append(labelButtons(view.labels.get(i), (label) => editWithPrompt(machine, i, label)));
    grid.append(cell);
  });
  root.append(grid);
  const done = el("button", { class: "submit" }, "continue");
  done.addEventListener("click", () => machine.advance());
  root.append(done);
}

function editWithPrompt(machine: ViewMachine, stimulus: number, label: Label): void {
  const result = machine.requestEdit(stimulus, label);
  if (result.kind === "needs-confirmation") {
    const ok = window.confirm(
      "You already accepted or rejected a name for this color. Change its category anyway?",
    );
    if (ok) machine.requestEdit(stimulus, label, true);
  }
}

function editOtherHint(root: HTMLElement, machine: ViewMachine): HTMLElement {
  return el(
    "p",
    { class: "hint" },
    "you can revise any categorization whenever you like; use the grid after deciding",
  );
}
