// Scripted headless participant: plays a full session through the real
// protocol without a DOM. Used by the end-to-end test and for smoke-testing
// live deployments.

import { SessionClient, SocketFactory } from "./client.js";
import { Frame, Label, LABELS } from "./protocol.js";
import { ViewMachine } from "./state.js";

/** Deterministic PRNG (mulberry32). */
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface EditPlanEntry {
  /** fire after this many own decisions */
  afterDecision: number;
  /** relabel the just-decided stimulus to this */
  label: Label;
  /** relabel a different stimulus instead (no warning expected) */
  differentStimulus?: boolean;
}

export interface ScriptedOptions {
  url: string;
  sessionId: string;
  participantId: string;
  acceptRate?: number;
  seed?: number;
  editPlan?: EditPlanEntry[];
  socketFactory?: SocketFactory;
}

export interface ScriptedResult {
  decisions: number;
  warningsReceived: number;
  datasetsPlayed: string[];
}

/** Run a full session; resolves when the server declares it complete. */
export function runScripted(opts: ScriptedOptions): Promise<ScriptedResult> {
  return new Promise((resolve, reject) => {
    const random = rng(opts.seed ?? 1);
    const acceptRate = opts.acceptRate ?? 0.7;
    const plan = [...(opts.editPlan ?? [])];
    const datasets: string[] = [];
    const client = new SessionClient({
      url: opts.url,
      sessionId: opts.sessionId,
      participantId: opts.participantId,
      socketFactory: opts.socketFactory,
      maxReconnects: 3,
    });
    const machine = new ViewMachine(opts.participantId, (type, body) =>
      client.send(type, body),
    );
    const timer = setTimeout(
      () => reject(new Error(`${opts.participantId}: session timed out`)),
      120_000,
    );

    // the participant's naming memory: starts at its categorization, adopts
    // accepted proposals (distinct from the categorization it may edit)
    let names = new Map<number, Label>();

    const act = () => {
      const view = machine.view;
      if (view.phase === "categorize" && !view.submitted && view.manifest) {
        if (!datasets.includes(view.datasetId!)) {
          datasets.push(view.datasetId!);
          names = new Map();
        }
        view.manifest.stimuli.forEach((entry, i) => {
          const label = LABELS[(entry.component_index - 1) % LABELS.length];
          machine.assignLabel(i, label);
          names.set(i, label);
        });
        machine.submitInitial();
      } else if (view.phase === "speak" && view.trial && !view.trial.acted) {
        machine.propose(names.get(view.trial.stimulusIndex) ?? "A");
      } else if (view.phase === "decide" && view.trial && !view.trial.acted) {
        const accept = random() < acceptRate;
        const trialStim = view.trial.stimulusIndex;
        const proposal = view.trial.proposal;
        machine.decide(accept);
        if (accept && proposal) {
          names.set(trialStim, proposal);
        }
        // post-decision edit window
        const entry = plan[0];
        if (entry && machine.view.decisionsMade === entry.afterDecision) {
          plan.shift();
          const n = view.manifest?.stimuli.length ?? 15;
          const target = entry.differentStimulus ? (trialStim + 1) % n : trialStim;
          const result = machine.requestEdit(target, entry.label);
          if (result.kind === "needs-confirmation") {
            machine.requestEdit(target, entry.label, true);
          }
        }
        machine.advance();
      } else if (view.phase === "complete") {
        clearTimeout(timer);
        client.close();
        resolve({
          decisions: view.decisionsMade,
          warningsReceived: view.warningsReceived,
          datasetsPlayed: datasets,
        });
      }
    };

    client.onFrame = (frame: Frame) => {
      try {
        machine.handleServer(frame);
        act();
      } catch (err) {
        clearTimeout(timer);
        client.close();
        reject(err);
      }
    };
    client.onGone = () => {
      clearTimeout(timer);
      reject(new Error(`${opts.participantId}: connection lost`));
    };
    client.connect();
  });
}
