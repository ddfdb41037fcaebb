import type { FetchLike } from '../src/api.js';
import type { Scheduler } from '../src/state.js';

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

/** fetch stub that records requests and answers from a route table. */
export function makeFetch(
  routes: (req: RecordedRequest) => { status?: number; body: unknown } | undefined,
  log: RecordedRequest[],
): FetchLike {
  return async (url, init) => {
    const req: RecordedRequest = {
      url,
      method: init?.method ?? 'GET',
      body: init?.body ? JSON.parse(String(init.body)) : null,
    };
    log.push(req);
    const match = routes(req);
    if (!match) {
      return new Response(JSON.stringify({ code: 'not-found', stage: 'test', message: url }), {
        status: 404,
        headers: { 'content-type': 'application/json' },
      });
    }
    return new Response(JSON.stringify(match.body), {
      status: match.status ?? 200,
      headers: { 'content-type': 'application/json' },
    });
  };
}

/** Deterministic scheduler: timers fire only when the test flushes them. */
export class ManualScheduler implements Scheduler {
  private queue = new Map<number, () => void>();
  private next = 1;

  schedule(fn: () => void, _ms: number): unknown {
    const id = this.next++;
    this.queue.set(id, fn);
    return id;
  }

  cancel(handle: unknown): void {
    this.queue.delete(handle as number);
  }

  get pending(): number {
    return this.queue.size;
  }

  flush(): void {
    const fns = [...this.queue.values()];
    this.queue.clear();
    fns.forEach((fn) => fn());
  }
}

export function planResponse(body: Record<string, unknown>, nae: number,
                             active?: boolean[]): Record<string, unknown> {
  return {
    case_id: 'demo',
    volume_choice: body.volume_choice,
    target: body.target,
    tilt_x: body.tilt_x,
    tilt_y: body.tilt_y,
    nae,
    sdr: 0.72,
    st_mean_mm: 5.4,
    active: active ?? new Array(990).fill(true),
    element_indices: Array.from({ length: 990 }, (_, i) => i),
  };
}

export async function settle(): Promise<void> {
  // drain pending promise continuations
  for (let i = 0; i < 10; i += 1) await Promise.resolve();
}
