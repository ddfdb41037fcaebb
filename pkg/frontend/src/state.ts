import type { ApiClient } from './api.js';
import type { JobStatus, PlanRequestBody, PlanResponse, VolumeChoice } from './types.js';

export const TILT_LIMIT = 10;
const DEFAULT_DEBOUNCE_MS = 150;

export interface PlanState {
  caseId: string | null;
  target: [number, number, number] | null;
  tiltX: number;
  tiltY: number;
  volumeChoice: VolumeChoice;
  plan: PlanResponse | null;
  pending: boolean;
  error: string | null;
  jobs: JobStatus[];
}

export interface Scheduler {
  schedule(fn: () => void, ms: number): unknown;
  cancel(handle: unknown): void;
}

const defaultScheduler: Scheduler = {
  schedule: (fn, ms) => setTimeout(fn, ms),
  cancel: (handle) => clearTimeout(handle as ReturnType<typeof setTimeout>),
};

export function clampTilt(value: number): number {
  return Math.min(TILT_LIMIT, Math.max(-TILT_LIMIT, value));
}

/**
 * Single-page planning state.
 *
 * Every metric shown to the operator comes verbatim from a server response
 * for the exact displayed parameters: requests are debounced, at most one
 * is in flight, and a response is dropped unless it matches the parameters
 * currently on screen (no client-side recomputation, no stale overwrite).
 */
export class PlanController {
  readonly state: PlanState = {
    caseId: null,
    target: null,
    tiltX: 0,
    tiltY: 0,
    volumeChoice: 'sct',
    plan: null,
    pending: false,
    error: null,
    jobs: [],
  };

  requestsSent = 0;

  private readonly debounceMs: number;
  private readonly scheduler: Scheduler;
  private readonly listeners: Array<(s: PlanState) => void> = [];
  private timer: unknown = null;
  private inFlight = false;
  private rerunAfterFlight = false;

  constructor(private readonly api: ApiClient, options?: { debounceMs?: number; scheduler?: Scheduler }) {
    this.debounceMs = options?.debounceMs ?? DEFAULT_DEBOUNCE_MS;
    this.scheduler = options?.scheduler ?? defaultScheduler;
  }

  onChange(listener: (s: PlanState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const l of this.listeners) l(this.state);
  }

  setCase(caseId: string): void {
    this.state.caseId = caseId;
    this.state.plan = null;
    this.state.jobs = [];
    this.schedulePlan();
  }

  setTarget(x: number, y: number, z: number): void {
    this.state.target = [x, y, z];
    this.schedulePlan();
  }

  setTilt(tiltX: number, tiltY: number): void {
    this.state.tiltX = clampTilt(tiltX);
    this.state.tiltY = clampTilt(tiltY);
    this.schedulePlan();
  }

  setVolumeChoice(choice: VolumeChoice): void {
    this.state.volumeChoice = choice;
    this.schedulePlan();
  }

  private currentRequest(): PlanRequestBody | null {
    if (this.state.caseId === null || this.state.target === null) return null;
    return {
      target: [...this.state.target] as [number, number, number],
      tilt_x: this.state.tiltX,
      tilt_y: this.state.tiltY,
      volume_choice: this.state.volumeChoice,
    };
  }

  private matchesState(req: PlanRequestBody, caseId: string): boolean {
    const t = this.state.target;
    return (
      caseId === this.state.caseId &&
      t !== null &&
      req.target[0] === t[0] && req.target[1] === t[1] && req.target[2] === t[2] &&
      req.tilt_x === this.state.tiltX &&
      req.tilt_y === this.state.tiltY &&
      req.volume_choice === this.state.volumeChoice
    );
  }

  /** Debounced; collapses bursts of slider motion into one request. */
  schedulePlan(): void {
    if (this.currentRequest() === null) return;
    if (this.timer !== null) this.scheduler.cancel(this.timer);
    this.timer = this.scheduler.schedule(() => {
      this.timer = null;
      void this.firePlan();
    }, this.debounceMs);
    this.emit();
  }

  private async firePlan(): Promise<void> {
    if (this.inFlight) {
      this.rerunAfterFlight = true;
      return;
    }
    const req = this.currentRequest();
    const caseId = this.state.caseId;
    if (req === null || caseId === null) return;
    this.inFlight = true;
    this.state.pending = true;
    this.emit();
    try {
      this.requestsSent += 1;
      const plan = await this.api.plan(caseId, req);
      // only adopt the response if the screen still shows these parameters
      if (this.matchesState(req, caseId)) {
        this.state.plan = plan;
        this.state.error = null;
      }
    } catch (err) {
      if (this.matchesState(req, caseId)) {
        this.state.plan = null;
        this.state.error = err instanceof Error ? err.message : String(err);
      }
    } finally {
      this.inFlight = false;
      this.state.pending = this.rerunAfterFlight;
      this.emit();
      if (this.rerunAfterFlight) {
        this.rerunAfterFlight = false;
        void this.firePlan();
      }
    }
  }

  /** Server-side tilt search; snaps the sliders to the returned pose. */
  async maximizeNae(stepDeg = 1.0): Promise<void> {
    const caseId = this.state.caseId;
    const target = this.state.target;
    if (caseId === null || target === null) return;
    this.state.pending = true;
    this.emit();
    try {
      const best = await this.api.optimize(caseId, [...target] as [number, number, number],
                                           this.state.volumeChoice, stepDeg);
      this.state.tiltX = clampTilt(best.tilt_x);
      this.state.tiltY = clampTilt(best.tilt_y);
      this.state.error = null;
      await this.firePlan();
    } catch (err) {
      this.state.error = err instanceof Error ? err.message : String(err);
      this.state.pending = false;
      this.emit();
    }
  }

  async submitSimulation(): Promise<string | null> {
    const req = this.currentRequest();
    const caseId = this.state.caseId;
    if (req === null || caseId === null) return null;
    const { job_id } = await this.api.simulate(caseId, req);
    await this.refreshJob(job_id);
    return job_id;
  }

  async refreshJob(jobId: string): Promise<JobStatus> {
    const status = await this.api.jobStatus(jobId);
    const idx = this.state.jobs.findIndex((j) => j.job_id === jobId);
    if (idx >= 0) this.state.jobs[idx] = status;
    else this.state.jobs.push(status);
    this.emit();
    return status;
  }
}
