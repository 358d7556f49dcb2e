// WebSocket transport: frame sequencing, automatic reconnect with resume.
// The WebSocket constructor is injectable so the headless client can run
// under Node with the `ws` package.

import { decodeFrame, encodeFrame, Frame } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: any) => void) | null;
  onmessage: ((ev: { data: any }) => void) | null;
  onclose: ((ev?: any) => void) | null;
  onerror: ((ev?: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  url: string;
  sessionId: string;
  participantId: string;
  socketFactory?: SocketFactory;
  reconnectDelayMs?: number;
  maxReconnects?: number;
}

export class SessionClient {
  private opts: Required<Pick<ClientOptions, "url" | "sessionId" | "participantId">> &
    ClientOptions;
  private socket: SocketLike | null = null;
  private sequence = 0;
  private reconnects = 0;
  private closedByUser = false;
  onFrame: ((frame: Frame) => void) | null = null;
  onOpen: (() => void) | null = null;
  onGone: (() => void) | null = null;

  constructor(opts: ClientOptions) {
    this.opts = opts as any;
  }

  connect(): void {
    const factory: SocketFactory =
      this.opts.socketFactory ?? ((url) => new WebSocket(url) as unknown as SocketLike);
    const socket = factory(this.opts.url);
    this.socket = socket;
    socket.onopen = () => {
      // a fresh join or, on an already-joined participant, a resume snapshot
      this.send("join", { participant: this.opts.participantId });
      if (this.onOpen) this.onOpen();
    };
    socket.onmessage = (ev) => {
      const frame = decodeFrame(String(ev.data));
      if (this.onFrame) this.onFrame(frame);
    };
    socket.onclose = () => {
      if (this.closedByUser) return;
      const max = this.opts.maxReconnects ?? 20;
      if (this.reconnects >= max) {
        if (this.onGone) this.onGone();
        return;
      }
      this.reconnects += 1;
      setTimeout(() => this.connect(), this.opts.reconnectDelayMs ?? 500);
    };
    socket.onerror = () => {
      /* onclose follows */
    };
  }

  send(type: string, body: Record<string, any>): void {
    if (!this.socket) throw new Error("not connected");
    this.sequence += 1;
    const frame: Frame = {
      session_id: this.opts.sessionId,
      sequence: this.sequence,
      type,
      sender: this.opts.participantId,
      to: null,
      body,
    };
    this.socket.send(encodeFrame(frame));
  }

  close(): void {
    this.closedByUser = true;
    this.socket?.close();
  }
}
