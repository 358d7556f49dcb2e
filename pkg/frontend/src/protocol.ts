// Wire protocol types shared by the browser UI and the headless client.
// One frame is one JSON document per WebSocket text message.

export const LABELS = ["A", "B", "C", "D", "E"] as const;
export type Label = (typeof LABELS)[number];

export function isLabel(value: unknown): value is Label {
  return typeof value === "string" && (LABELS as readonly string[]).includes(value);
}

export interface Frame {
  session_id: string;
  sequence: number;
  type: string;
  sender: string | null;
  to: string | null;
  body: Record<string, any>;
}

export interface StimulusEntry {
  l: number;
  u: number;
  v: number;
  component_index: number;
}

export interface Manifest {
  schema: number;
  id: string;
  seed: number;
  stimuli: StimulusEntry[];
}

export function encodeFrame(frame: Frame): string {
  return JSON.stringify(frame);
}

export function decodeFrame(raw: string): Frame {
  const doc = JSON.parse(raw);
  if (typeof doc !== "object" || doc === null) {
    throw new Error("frame is not an object");
  }
  if (typeof doc.type !== "string") {
    throw new Error("frame has no type");
  }
  return {
    session_id: doc.session_id ?? "",
    sequence: typeof doc.sequence === "number" ? doc.sequence : 0,
    type: doc.type,
    sender: doc.sender ?? null,
    to: doc.to ?? null,
    body: doc.body ?? {},
  };
}

export function stimulusPngUrl(
  httpBase: string,
  sessionId: string,
  datasetId: string,
  index: number,
  size = 128,
): string {
  return `${httpBase}/sessions/${sessionId}/stimuli/${datasetId}/${index}.png?size=${size}`;
}
