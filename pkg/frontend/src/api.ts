import type {
  ApiErrorBody,
  CaseInfo,
  ElementRow,
  JobStatus,
  OptimizeResponse,
  PlanRequestBody,
  PlanResponse,
  SliceAxis,
  VolumeChoice,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly code: string;
  readonly stage: string;
  readonly status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.stage = body.stage;
  }
}

/** Thin typed client over the planning service; fetch is injectable for tests. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, init);
    if (!res.ok) {
      let body: ApiErrorBody;
      try {
        body = (await res.json()) as ApiErrorBody;
      } catch {
        body = { code: 'error', stage: 'transport', message: res.statusText };
      }
      throw new ApiError(res.status, body);
    }
    return (await res.json()) as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  listCases(): Promise<CaseInfo[]> {
    return this.request<CaseInfo[]>('/cases');
  }

  getCase(caseId: string): Promise<CaseInfo> {
    return this.request<CaseInfo>(`/cases/${encodeURIComponent(caseId)}`);
  }

  registerCase(caseId: string, rctPath: string, sctPath?: string): Promise<CaseInfo> {
    return this.post<CaseInfo>('/cases', {
      case_id: caseId,
      rct_path: rctPath,
      sct_path: sctPath ?? null,
    });
  }

  plan(caseId: string, body: PlanRequestBody): Promise<PlanResponse> {
    return this.post<PlanResponse>(`/cases/${encodeURIComponent(caseId)}/plan`, body);
  }

  elements(caseId: string, body: PlanRequestBody): Promise<ElementRow[]> {
    const params = new URLSearchParams({
      target: body.target.join(','),
      tilt_x: String(body.tilt_x),
      tilt_y: String(body.tilt_y),
      volume_choice: body.volume_choice,
    });
    return this.request<ElementRow[]>(
      `/cases/${encodeURIComponent(caseId)}/elements?${params.toString()}`,
    );
  }

  optimize(caseId: string, target: [number, number, number], volumeChoice: VolumeChoice,
           stepDeg = 1.0): Promise<OptimizeResponse> {
    return this.post<OptimizeResponse>(`/cases/${encodeURIComponent(caseId)}/optimize`, {
      target,
      volume_choice: volumeChoice,
      step_deg: stepDeg,
    });
  }

  simulate(caseId: string, body: PlanRequestBody): Promise<{ job_id: string }> {
    return this.post<{ job_id: string }>(`/cases/${encodeURIComponent(caseId)}/simulate`, body);
  }

  jobStatus(jobId: string): Promise<JobStatus> {
    return this.request<JobStatus>(`/jobs/${encodeURIComponent(jobId)}`);
  }

  sliceUrl(caseId: string, volume: 'rct' | 'sct' | 'rms', axis: SliceAxis, index: number,
           window = 2000, level = 500): string {
    const params = new URLSearchParams({
      volume,
      axis,
      index: String(index),
      window: String(window),
      level: String(level),
    });
    return `${this.baseUrl}/cases/${encodeURIComponent(caseId)}/slice?${params.toString()}`;
  }
}
