/**
 * Single-flight overlay requester.
 *
 * The drag/nudge loop can emit requests far faster than the server can
 * render.  At most one request is in flight; newer requests replace the
 * queued one, so superseded poses are never sent and the final rendered
 * overlay always matches the latest pose.
 */

export interface QueueCallbacks<Req, Res> {
  send: (request: Req) => Promise<Res>;
  onResult: (request: Req, result: Res) => void;
  onError?: (request: Req, error: unknown) => void;
}

export class OverlayQueue<Req, Res> {
  private inFlight = false;
  private pending: Req | null = null;

  constructor(private readonly callbacks: QueueCallbacks<Req, Res>) {}

  /** True while a request is unanswered or queued. */
  get busy(): boolean {
    return this.inFlight || this.pending !== null;
  }

  request(request: Req): void {
    if (this.inFlight) {
      this.pending = request;  // supersedes whatever was queued
      return;
    }
    void this.fire(request);
  }

  /** Resolves once no request is in flight or queued. */
  async drain(): Promise<void> {
    while (this.busy) {
      await new Promise((resolve) => setTimeout(resolve, 1));
    }
  }

  private async fire(request: Req): Promise<void> {
    this.inFlight = true;
    try {
      const result = await this.callbacks.send(request);
      this.callbacks.onResult(request, result);
    } catch (error) {
      this.callbacks.onError?.(request, error);
    } finally {
      this.inFlight = false;
      if (this.pending !== null) {
        const next = this.pending;
        this.pending = null;
        void this.fire(next);
      }
    }
  }
}
