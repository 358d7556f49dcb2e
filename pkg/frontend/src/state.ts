// Client-side session state: a thin mirror of the server's phases.
// The machine validates user intents, emits protocol frames through the
// outbox, and never computes or displays acceptance probabilities.

import { Frame, isLabel, Label, Manifest } from "./protocol.js";

export type Phase =
  | "connecting"
  | "lobby"
  | "categorize"
  | "waiting"
  | "speak"
  | "decide"
  | "edit_window"
  | "complete";

export interface TrialView {
  datasetId: string;
  stimulusIndex: number;
  round: number;
  role: "speaker" | "listener";
  proposal: Label | null;
  acted: boolean; // proposed (speaker) or decided (listener) this trial
}

export interface ClientView {
  phase: Phase;
  participants: string[];
  datasetId: string | null;
  manifest: Manifest | null;
  labels: Map<number, Label>; // own categorization of the current dataset
  submitted: boolean; // initial categorization accepted for current dataset
  trial: TrialView | null;
  notice: string | null;
  decisionsMade: number;
  warningsReceived: number;
}

export type Outbox = (type: string, body: Record<string, any>) => void;

export type EditRequest =
  | { kind: "sent" }
  | { kind: "needs-confirmation" }
  | { kind: "rejected"; reason: string };

export class ViewMachine {
  readonly participantId: string;
  view: ClientView;
  private out: Outbox;
  private pendingSubmit: { type: string; body: Record<string, any> } | null = null;
  onChange: (() => void) | null = null;

  constructor(participantId: string, out: Outbox) {
    this.participantId = participantId;
    this.out = out;
    this.view = {
      phase: "connecting",
      participants: [],
      datasetId: null,
      manifest: null,
      labels: new Map(),
      submitted: false,
      trial: null,
      notice: null,
      decisionsMade: 0,
      warningsReceived: 0,
    };
  }

  private changed() {
    if (this.onChange) this.onChange();
  }

  // ---- server frames -------------------------------------------------

  handleServer(frame: Frame): void {
    const body = frame.body;
    switch (frame.type) {
      case "joined":
        this.view.phase = this.view.phase === "connecting" ? "lobby" : this.view.phase;
        this.view.participants = body.participants ?? [];
        break;
      case "stimulus_set":
        this.view.datasetId = body.dataset_id;
        this.view.manifest = body.manifest;
        this.view.labels = new Map();
        this.view.submitted = false;
        this.view.trial = null;
        this.view.phase = "categorize";
        break;
      case "initialization_ack":
        if (body.participant === this.participantId) {
          this.view.submitted = true;
          this.pendingSubmit = null;
          this.view.phase = "waiting";
        }
        break;
      case "show_stimulus":
        this.view.trial = {
          datasetId: body.dataset_id,
          stimulusIndex: body.stimulus_index,
          round: body.round,
          role: body.role,
          proposal: null,
          acted: false,
        };
        this.view.phase = body.role === "speaker" ? "speak" : "waiting";
        this.view.notice = null;
        break;
      case "propose_name":
        if (this.view.trial && this.view.trial.role === "listener") {
          this.view.trial.proposal = body.label;
          this.view.phase = "decide";
        }
        break;
      case "decision":
        // relay to the speaker; informational only
        if (this.view.trial && this.view.trial.role === "speaker") {
          this.view.notice = body.accept ? "partner accepted" : "partner rejected";
        }
        break;
      case "edit_warning":
        this.view.warningsReceived += 1;
        this.view.notice = "categorization changed after deciding on this stimulus";
        break;
      case "session_complete":
        this.view.phase = "complete";
        this.view.trial = null;
        break;
      case "resume":
        this.applyResume(body);
        break;
      case "protocol_error":
        // a rejected resend of an applied message is harmless; surface others
        if (!this.pendingSubmit) {
          this.view.notice = `rejected: ${body.reason}`;
        }
        break;
      default:
        break;
    }
    this.changed();
  }

  private applyResume(body: Record<string, any>): void {
    this.view.participants = body.participants ?? [];
    this.view.datasetId = body.dataset_id ?? null;
    this.view.manifest = body.manifest ?? null;
    this.view.submitted = !!body.initialized;
    this.view.labels = new Map();
    if (body.categorization) {
      for (const [key, label] of Object.entries(body.categorization)) {
        if (isLabel(label)) this.view.labels.set(Number(key), label);
      }
    }
    const phase = body.phase as string;
    const current = body.current;
    if (phase === "complete") {
      this.view.phase = "complete";
      this.view.trial = null;
    } else if (phase === "initialization") {
      this.view.phase = this.view.submitted ? "waiting" : "categorize";
      this.view.trial = null;
    } else if (current) {
      this.view.trial = {
        datasetId: this.view.datasetId ?? "",
        stimulusIndex: current.stimulus_index,
        round: current.round,
        role: current.role,
        proposal: current.proposal ?? null,
        acted: false,
      };
      if (phase === "naming_turn") {
        this.view.phase = current.role === "speaker" ? "speak" : "waiting";
      } else if (phase === "await_decision") {
        this.view.phase = current.role === "listener" ? "decide" : "waiting";
      } else if (phase === "await_edit") {
        if (current.role === "listener") {
          this.view.trial.acted = true;
          this.view.phase = "edit_window";
        } else {
          this.view.phase = "waiting";
        }
      }
    } else {
      this.view.phase = "lobby";
    }
  }

  // ---- user intents ---------------------------------------------------

  /** Assign a label during initial categorization (local until submitted). */
  assignLabel(stimulus: number, label: Label): void {
    if (this.view.phase !== "categorize") return;
    this.view.labels.set(stimulus, label);
    this.changed();
  }

  categorizationComplete(): boolean {
    const n = this.view.manifest?.stimuli.length ?? 0;
    return n > 0 && this.view.labels.size === n;
  }

  /** Submit the full initial categorization; no-op until complete. Resending
   * after a lost ack repeats the identical frame (idempotent by sequence). */
  submitInitial(): boolean {
    if (this.view.phase !== "categorize" && !this.pendingSubmit) return false;
    if (!this.pendingSubmit) {
      if (!this.categorizationComplete() || !this.view.datasetId) return false;
      const labels: Record<string, string> = {};
      for (const [idx, label] of this.view.labels) labels[String(idx)] = label;
      this.pendingSubmit = {
        type: "submit_initial_categorization",
        body: { dataset_id: this.view.datasetId, labels },
      };
    }
    this.out(this.pendingSubmit.type, this.pendingSubmit.body);
    return true;
  }

  /** Speaker picks a name. Debounced: one frame per trial. */
  propose(label: Label): boolean {
    const trial = this.view.trial;
    if (this.view.phase !== "speak" || !trial || trial.role !== "speaker" || trial.acted) {
      return false;
    }
    trial.acted = true;
    this.out("propose_name", { label });
    this.changed();
    return true;
  }

  /** Listener accepts or rejects. Debounced: one frame per trial. */
  decide(accept: boolean): boolean {
    const trial = this.view.trial;
    if (this.view.phase !== "decide" || !trial || trial.role !== "listener" || trial.acted) {
      return false;
    }
    trial.acted = true;
    this.view.decisionsMade += 1;
    this.view.phase = "edit_window";
    this.out("decision", { accept });
    this.changed();
    return true;
  }

  /** Re-label a stimulus during play. Editing the stimulus just decided on
   * requires explicit confirmation (the warning prompt). */
  requestEdit(stimulus: number, label: Label, confirmed = false): EditRequest {
    const playPhases: Phase[] = ["speak", "decide", "edit_window", "waiting"];
    if (!playPhases.includes(this.view.phase) || !this.view.datasetId) {
      return { kind: "rejected", reason: "no categorization to edit" };
    }
    const trial = this.view.trial;
    const editingDecided =
      this.view.phase === "edit_window" &&
      trial !== null &&
      trial.role === "listener" &&
      stimulus === trial.stimulusIndex;
    if (editingDecided && !confirmed) {
      return { kind: "needs-confirmation" };
    }
    this.view.labels.set(stimulus, label);
    this.out("edit_categorization", {
      dataset_id: this.view.datasetId,
      stimulus_index: stimulus,
      label,
    });
    this.changed();
    return { kind: "sent" };
  }

  /** Close the post-decision window and hand the turn back. */
  advance(): boolean {
    if (this.view.phase !== "edit_window") return false;
    this.view.phase = "waiting";
    this.out("turn_advance", {});
    this.changed();
    return true;
  }
}
