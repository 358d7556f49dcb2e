// Entry point: ?session=<id>&participant=<name>&server=<host:port>
// (server defaults to the page origin).

import { SessionClient } from "./client.js";
import { render } from "./ui.js";
import { ViewMachine } from "./state.js";

function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session") ?? "session-1";
  const participantId = params.get("participant") ?? "";
  if (!participantId) {
    document.body.textContent = "missing ?participant=<your-name> in the URL";
    return;
  }
  const server = params.get("server") ?? window.location.host;
  const httpBase = `${window.location.protocol}//${server}`;
  const wsProto = window.location.protocol === "https:" ? "wss" : "ws";

  const root = document.getElementById("app")!;
  const client = new SessionClient({
    url: `${wsProto}://${server}/ws/${sessionId}`,
    sessionId,
    participantId,
  });
  const machine = new ViewMachine(participantId, (type, body) => client.send(type, body));
  const ctx = { httpBase, sessionId };
  machine.onChange = () => render(root, machine, ctx);
  client.onFrame = (frame) => machine.handleServer(frame);
  client.onGone = () => {
    root.textContent = "connection lost — reload to retry";
  };
  client.connect();
  render(root, machine, ctx);
}

boot();
