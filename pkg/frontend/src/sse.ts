// Server-sent events over fetch streaming, with ?since resume.
//
// EventSource would do in a browser, but a fetch-based reader works in
// Node 20 as well, so the console logic and the tests share one client.
// The last delivered id is the resume cursor: on reconnect the stream
// replays everything after it, and the seq guard upstream drops nothing.

export type SseEvent = {
  id: number | null;
  type: string;
  data: unknown;
};

export type SseCallbacks = {
  onEvent: (event: SseEvent) => void;
  onOpen?: () => void;
  onDisconnect?: (willRetry: boolean) => void;
  onEnd?: () => void;
};

export type SseOptions = {
  retryDelayMs?: number;
  maxRetries?: number; // undefined = retry forever
};

export class SseClient {
  lastId = -1;
  private stopped = false;
  private retries = 0;

  constructor(
    private readonly url: string,
    private readonly callbacks: SseCallbacks,
    private readonly options: SseOptions = {},
  ) {}

  start(): void {
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
  }

  private async loop(): Promise<void> {
    const retryDelay = this.options.retryDelayMs ?? 1000;
    while (!this.stopped) {
      try {
        const ended = await this.consumeOnce();
        if (ended) {
          this.callbacks.onEnd?.();
          return;
        }
      } catch {
        // fall through to retry
      }
      if (this.stopped) return;
      const { maxRetries } = this.options;
      const willRetry = maxRetries === undefined || this.retries < maxRetries;
      this.callbacks.onDisconnect?.(willRetry);
      if (!willRetry) return;
      this.retries += 1;
      await new Promise((r) => setTimeout(r, retryDelay));
    }
  }

  /** One connection lifetime; resolves true when the server ended the feed. */
  private async consumeOnce(): Promise<boolean> {
    const sep = this.url.includes("?") ? "&" : "?";
    const resp = await fetch(`${this.url}${sep}since=${this.lastId}`);
    if (!resp.ok || !resp.body) throw new Error(`stream: ${resp.status}`);
    this.retries = 0;
    this.callbacks.onOpen?.();

    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return false; // connection dropped without an end event
      buffer += decoder.decode(value, { stream: true });
      let idx;
      while ((idx = buffer.indexOf("\n\n")) >= 0) {
        const block = buffer.slice(0, idx);
        buffer = buffer.slice(idx + 2);
        const event = parseBlock(block);
        if (event === null) continue;
        if (event.type === "end") return true;
        if (event.id !== null) this.lastId = event.id;
        this.callbacks.onEvent(event);
      }
    }
  }
}

export function parseBlock(block: string): SseEvent | null {
  let id: number | null = null;
  let type = "message";
  const dataLines: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith(":")) continue; // comment / keepalive
    if (line.startsWith("id: ")) id = Number(line.slice(4));
    else if (line.startsWith("event: ")) type = line.slice(7);
    else if (line.startsWith("data: ")) dataLines.push(line.slice(6));
  }
  if (dataLines.length === 0) return null;
  let data: unknown;
  try {
    data = JSON.parse(dataLines.join("\n"));
  } catch {
    data = dataLines.join("\n");
  }
  return { id, type, data };
}
