// One socket, auto-reconnect. The constructor takes a WebSocket factory so
// the headless test harness can plug in the `ws` package where the browser
// global is not available.

import { ClientMessage, ServerMessage, parseMessage } from "./messages.js";

export interface WsLike {
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  send(data: string): void;
  close(): void;
}

export type WsFactory = (url: string) => WsLike;

const RECONNECT_MS = 1000;

export class PanelSocket {
  private ws: WsLike | null = null;
  private closed = false;
  private retry: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private onMessage: (msg: ServerMessage, nowMs: number) => void,
    private onStatus: (connected: boolean) => void,
    private factory: WsFactory = (u) => new WebSocket(u) as unknown as WsLike,
  ) {}

  connect(): void {
    this.closed = false;
    let ws: WsLike;
    try {
      ws = this.factory(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.ws = ws;
    ws.onopen = () => this.onStatus(true);
    ws.onmessage = (ev) => {
      const msg = parseMessage(String(ev.data));
      if (msg !== null) this.onMessage(msg, Date.now());
    };
    ws.onerror = () => {
      // the close handler does the cleanup; errors alone are not fatal
    };
    ws.onclose = () => {
      this.onStatus(false);
      this.ws = null;
      this.scheduleReconnect();
    };
  }

  send(msg: ClientMessage): boolean {
    if (this.ws === null) return false;
    try {
      this.ws.send(JSON.stringify(msg));
      return true;
    } catch {
      return false;
    }
  }

  close(): void {
    this.closed = true;
    if (this.retry !== null) {
      clearTimeout(this.retry);
      this.retry = null;
    }
    this.ws?.close();
    this.ws = null;
  }

  private scheduleReconnect(): void {
    if (this.closed || this.retry !== null) return;
    this.retry = setTimeout(() => {
      this.retry = null;
      if (!this.closed) this.connect();
    }, RECONNECT_MS);
  }
}
