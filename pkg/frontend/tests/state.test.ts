import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { PlanController, clampTilt } from '../src/state.js';
import { ManualScheduler, RecordedRequest, makeFetch, planResponse, settle } from './helpers.js';

function setup(nae = 987) {
  const log: RecordedRequest[] = [];
  const fetch = makeFetch((req) => {
    if (req.url.endsWith('/plan')) {
      const body = req.body as Record<string, unknown>;
      return { body: planResponse(body, nae) };
    }
    if (req.url.endsWith('/optimize')) {
      return { body: { tilt_x: 0.0, tilt_y: 0.0, nae: 990 } };
    }
    return undefined;
  }, log);
  const scheduler = new ManualScheduler();
  const controller = new PlanController(new ApiClient('', fetch), { scheduler });
  controller.setCase('demo');
  controller.setTarget(1.0, -2.0, 3.0);
  return { controller, scheduler, log };
}

describe('tilt round trip', () => {
  it('sends the exact slider values and displays the exact server NAE', async () => {
    const { controller, scheduler, log } = setup(123);
    controller.setTilt(5, -3);
    scheduler.flush();
    await settle();

    const planCalls = log.filter((r) => r.url.endsWith('/plan'));
    expect(planCalls.length).toBe(1);
    const body = planCalls[0].body as Record<string, unknown>;
    expect(body.tilt_x).toBe(5);
    expect(body.tilt_y).toBe(-3);
    expect(body.target).toEqual([1.0, -2.0, 3.0]);
    expect(controller.state.plan?.nae).toBe(123);
    expect(controller.state.plan?.tilt_x).toBe(5);
  });

  it('clamps tilt inputs to the 10 degree bound before dispatch', async () => {
    const { controller, scheduler, log } = setup();
    controller.setTilt(15, -12.5);
    expect(controller.state.tiltX).toBe(10);
    expect(controller.state.tiltY).toBe(-10);
    scheduler.flush();
    await settle();
    const body = log.filter((r) => r.url.endsWith('/plan'))[0].body as Record<string, unknown>;
    expect(body.tilt_x).toBe(10);
    expect(body.tilt_y).toBe(-10);
  });

  it('clampTilt is symmetric and identity inside the bound', () => {
    expect(clampTilt(3.5)).toBe(3.5);
    expect(clampTilt(-10)).toBe(-10);
    expect(clampTilt(11)).toBe(10);
    expect(clampTilt(-99)).toBe(-10);
  });
});

describe('debounce and in-flight discipline', () => {
  it('collapses a rapid slider drag into one request', async () => {
    const { controller, scheduler, log } = setup();
    for (let i = 0; i <= 20; i += 1) {
      controller.setTilt(i / 2 - 5, 0);
    }
    expect(scheduler.pending).toBe(1);
    scheduler.flush();
    await settle();
    const planCalls = log.filter((r) => r.url.endsWith('/plan'));
    expect(planCalls.length).toBe(1);
    expect((planCalls[0].body as Record<string, unknown>).tilt_x).toBe(5);
  });

  it('keeps at most one request in flight and re-issues for the latest state', async () => {
    const log: RecordedRequest[] = [];
    const gates: Array<() => void> = [];
    const fetch = async (url: string, init?: RequestInit) => {
      const body = init?.body ? JSON.parse(String(init.body)) : null;
      log.push({ url, method: init?.method ?? 'GET', body });
      await new Promise<void>((resolve) => gates.push(resolve));
      return new Response(JSON.stringify(planResponse(body, 500)), {
        status: 200,
        headers: { 'content-type': 'application/json' },
      });
    };
    const scheduler = new ManualScheduler();
    const controller = new PlanController(new ApiClient('', fetch), { scheduler });
    controller.setCase('demo');
    controller.setTarget(0, 0, 0);

    controller.setTilt(1, 0);
    scheduler.flush();          // request 1 leaves, blocked on the gate
    await settle();
    controller.setTilt(2, 0);
    scheduler.flush();          // debounce fires while request 1 is in flight
    await settle();
    expect(log.length).toBe(1); // nothing new issued yet

    gates.shift()!();           // finish request 1
    await settle();
    expect(log.length).toBe(2); // the queued re-run fires with the latest tilt
    expect((log[1].body as Record<string, unknown>).tilt_x).toBe(2);
    gates.shift()!();
    await settle();
    expect(controller.state.plan?.tilt_x).toBe(2);
  });

  it('drops responses that no longer match the displayed parameters', async () => {
    const log: RecordedRequest[] = [];
    const gates: Array<() => void> = [];
    const fetch = async (url: string, init?: RequestInit) => {
      const body = init?.body ? JSON.parse(String(init.body)) : null;
      log.push({ url, method: init?.method ?? 'GET', body });
      await new Promise<void>((resolve) => gates.push(resolve));
      return new Response(JSON.stringify(planResponse(body, 111)), {
        status: 200,
        headers: { 'content-type': 'application/json' },
      });
    };
    const scheduler = new ManualScheduler();
    const controller = new PlanController(new ApiClient('', fetch), { scheduler });
    controller.setCase('demo');
    controller.setTarget(0, 0, 0);
    controller.setTilt(1, 1);
    scheduler.flush();
    await settle();
    controller.setTilt(9, 9);   // user moved on; the in-flight response is stale
    gates.shift()!();
    await settle();
    expect(controller.state.plan).toBeNull();
  });
});

describe('maximize NAE', () => {
  it('snaps the sliders to the optimizer result on the concentric phantom', async () => {
    const { controller, scheduler } = setup(990);
    controller.setTilt(7, -4);
    scheduler.flush();
    await settle();

    await controller.maximizeNae(1.0);
    await settle();
    expect(controller.state.tiltX).toBe(0);
    expect(controller.state.tiltY).toBe(0);
    expect(controller.state.plan?.nae).toBe(990);
    expect(controller.state.plan?.tilt_x).toBe(0);
  });
});

describe('volume choice', () => {
  it('re-requests the plan when switching rct/sct', async () => {
    const { controller, scheduler, log } = setup();
    controller.setTilt(2, 2);
    scheduler.flush();
    await settle();
    controller.setVolumeChoice('rct');
    scheduler.flush();
    await settle();
    const planCalls = log.filter((r) => r.url.endsWith('/plan'));
    expect(planCalls.length).toBe(2);
    expect((planCalls[1].body as Record<string, unknown>).volume_choice).toBe('rct');
    expect(controller.state.plan?.volume_choice).toBe('rct');
  });
});

describe('jobs', () => {
  it('tracks job submission and status updates', async () => {
    const log: RecordedRequest[] = [];
    let polls = 0;
    const fetch = makeFetch((req) => {
      if (req.url.endsWith('/plan')) {
        return { body: planResponse(req.body as Record<string, unknown>, 900) };
      }
      if (req.url.endsWith('/simulate')) return { body: { job_id: 'job-1' } };
      if (req.url.includes('/jobs/')) {
        polls += 1;
        return {
          body: {
            job_id: 'job-1', case_id: 'demo',
            state: polls >= 2 ? 'done' : 'running',
            progress: polls >= 2 ? 1.0 : 0.4,
            result: polls >= 2
              ? { max_rms_pa: 1.5, argmax_mm: [0, 0, 0], focal_shift_mm: 0.4, volume_choice: 'sct' }
              : null,
            error: null,
          },
        };
      }
      return undefined;
    }, log);
    const scheduler = new ManualScheduler();
    const controller = new PlanController(new ApiClient('', fetch), { scheduler });
    controller.setCase('demo');
    controller.setTarget(0, 0, 0);

    const jobId = await controller.submitSimulation();
    expect(jobId).toBe('job-1');
    expect(controller.state.jobs[0].state).toBe('running');
    const status = await controller.refreshJob('job-1');
    expect(status.state).toBe('done');
    expect(controller.state.jobs.length).toBe(1);
    expect(controller.state.jobs[0].result?.max_rms_pa).toBe(1.5);
  });
});
