export type VolumeChoice = 'rct' | 'sct';
export type SliceAxis = 'x' | 'y' | 'z';

export interface CaseInfo {
  case_id: string;
  volumes: string[];
  loaded: string[];
  dims: number[] | null;
  spacing_mm: number[] | null;
  origin_mm: number[] | null;
  has_rms: boolean;
}

export interface PlanRequestBody {
  target: [number, number, number];
  tilt_x: number;
  tilt_y: number;
  volume_choice: VolumeChoice;
}

export interface PlanResponse {
  case_id: string;
  volume_choice: VolumeChoice;
  target: number[];
  tilt_x: number;
  tilt_y: number;
  nae: number;
  sdr: number;
  st_mean_mm: number;
  active: boolean[];
  element_indices: number[];
}

export interface ElementRow {
  index: number;
  offset: [number, number, number];
  incident_angle_deg: number | null;
  skull_thickness_mm: number;
  sdr: number;
  active: boolean;
}

export interface OptimizeResponse {
  tilt_x: number;
  tilt_y: number;
  nae: number;
}

export type JobState = 'queued' | 'running' | 'done' | 'failed';

export interface JobStatus {
  job_id: string;
  case_id: string;
  state: JobState;
  progress: number;
  result: {
    max_rms_pa: number;
    argmax_mm: number[];
    focal_shift_mm: number;
    volume_choice: VolumeChoice;
  } | null;
  error: string | null;
}

export interface ApiErrorBody {
  code: string;
  stage: string;
  message: string;
}
