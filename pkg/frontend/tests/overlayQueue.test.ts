import { describe, expect, it } from "vitest";

import { OverlayQueue } from "../src/overlayQueue.js";

interface Req {
  id: number;
}

function slowServer(delayMs: number) {
  const seen: Req[] = [];
  const results: Req[] = [];
  const queue = new OverlayQueue<Req, Req>({
    send: async (req) => {
      seen.push(req);
      await new Promise((resolve) => setTimeout(resolve, delayMs));
      return req;
    },
    onResult: (_req, res) => results.push(res),
  });
  return { queue, seen, results };
}

describe("overlay queue", () => {
  it("coalesces ten rapid requests into first plus latest", async () => {
    const { queue, seen, results } = slowServer(10);
    for (let i = 1; i <= 10; i++) {
      queue.request({ id: i });
    }
    await queue.drain();
    expect(seen.length).toBe(2);
    expect(seen[0]).toEqual({ id: 1 });
    expect(seen[1]).toEqual({ id: 10 });  // 2..9 superseded, never sent
    expect(results[results.length - 1]).toEqual({ id: 10 });
  });

  it("keeps at most one request in flight", async () => {
    let inFlight = 0;
    let maxInFlight = 0;
    const queue = new OverlayQueue<number, number>({
      send: async (n) => {
        inFlight += 1;
        maxInFlight = Math.max(maxInFlight, inFlight);
        await new Promise((resolve) => setTimeout(resolve, 2));
        inFlight -= 1;
        return n;
      },
      onResult: () => undefined,
    });
    for (let i = 0; i < 20; i++) {
      queue.request(i);
      if (i % 5 === 0) {
        await new Promise((resolve) => setTimeout(resolve, 3));
      }
    }
    await queue.drain();
    expect(maxInFlight).toBe(1);
  });

  it("sequential requests are all sent", async () => {
    const { queue, seen } = slowServer(1);
    for (let i = 1; i <= 3; i++) {
      queue.request({ id: i });
      await queue.drain();
    }
    expect(seen.map((r) => r.id)).toEqual([1, 2, 3]);
  });

  it("a failing request does not wedge the queue", async () => {
    const errors: unknown[] = [];
    let fail = true;
    const served: number[] = [];
    const queue = new OverlayQueue<number, number>({
      send: async (n) => {
        if (fail) {
          fail = false;
          throw new Error("boom");
        }
        served.push(n);
        return n;
      },
      onResult: () => undefined,
      onError: (_req, error) => errors.push(error),
    });
    queue.request(1);
    await queue.drain();
    queue.request(2);
    await queue.drain();
    expect(errors.length).toBe(1);
    expect(served).toEqual([2]);
  });
});
