import type { LiveStatus } from "./types.js";

// narrow surface so tests can inject a fake EventSource
export interface EventSourceLike {
  onmessage: ((event: { data: string }) => void) | null;
  onerror: ((event: unknown) => void) | null;
  close(): void;
}

export type SourceFactory = (url: string) => EventSourceLike;

export interface LiveFeedHandlers {
  onStatus(status: LiveStatus): void;
  onError?(): void;
}

export class LiveFeed {
  private source: EventSourceLike | null = null;

  constructor(
    private url: string,
    private makeSource: SourceFactory = (u) => new EventSource(u) as EventSourceLike,
  ) {}

  start(handlers: LiveFeedHandlers): void {
    this.stop();
    const source = this.makeSource(this.url);
    source.onmessage = (event) => {
      try {
        handlers.onStatus(JSON.parse(event.data) as LiveStatus);
      } catch {
        // a malformed event is treated like a gap; the watchdog reports it
      }
    };
    source.onerror = () => handlers.onError?.();
    this.source = source;
  }

  stop(): void {
    this.source?.close();
    this.source = null;
  }
}
