// Live project event subscription over the server's SSE endpoint, with
// resume-on-reconnect. Uses fetch streaming rather than EventSource so the
// resume position can be sent as a header the way the server documents it.

import type { EventDoc } from "./types.js";

export type StreamStatus = "connecting" | "open" | "reconnecting" | "closed";

export interface EventStreamOptions {
  onEvent: (event: EventDoc) => void;
  onStatus?: (status: StreamStatus) => void;
  reconnectDelayMs?: number;
}

export class EventStream {
  private readonly url: string;
  private readonly opts: EventStreamOptions;
  private lastSeq = -1;
  private stopped = false;
  private abort: AbortController | null = null;

  constructor(baseUrl: string, projectId: string, opts: EventStreamOptions) {
    this.url = `${baseUrl.replace(/\/+$/, "")}/v1/projects/${projectId}/events`;
    this.opts = opts;
  }

  get lastSeenSeq(): number {
    return this.lastSeq;
  }

  start(): void {
    this.stopped = false;
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
    this.abort?.abort();
    this.setStatus("closed");
  }

  private setStatus(status: StreamStatus): void {
    this.opts.onStatus?.(status);
  }

  private async loop(): Promise<void> {
    while (!this.stopped) {
      this.setStatus(this.lastSeq < 0 ? "connecting" : "reconnecting");
      try {
        await this.consumeOnce();
      } catch {
        // fall through to reconnect
      }
      if (this.stopped) return;
      await new Promise((resolve) =>
        setTimeout(resolve, this.opts.reconnectDelayMs ?? 1000)
      );
    }
  }

  private async consumeOnce(): Promise<void> {
    this.abort = new AbortController();
    const headers: Record<string, string> = { accept: "text/event-stream" };
    if (this.lastSeq >= 0) headers["Last-Event-Seq"] = String(this.lastSeq);
    const resp = await fetch(this.url, {
      headers,
      signal: this.abort.signal,
    });
    if (!resp.ok || resp.body === null) {
      throw new Error(`stream request failed: ${resp.status}`);
    }
    this.setStatus("open");
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let sep: number;
      while ((sep = buffer.indexOf("\n\n")) !== -1) {
        this.dispatch(buffer.slice(0, sep));
        buffer = buffer.slice(sep + 2);
      }
    }
  }

  private dispatch(block: string): void {
    const data: string[] = [];
    for (const line of block.split("\n")) {
      if (line.startsWith("data:")) {
        let value = line.slice(5);
        if (value.startsWith(" ")) value = value.slice(1);
        data.push(value);
      }
    }
    if (data.length === 0) return; // comment / keepalive
    const event = JSON.parse(data.join("\n")) as EventDoc;
    if (event.seq <= this.lastSeq) return;
    this.lastSeq = event.seq;
    this.opts.onEvent(event);
  }
}
