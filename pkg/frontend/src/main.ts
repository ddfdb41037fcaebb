import { ApiClient } from './api.js';
import { categorize, categoryCounts, countsTotal } from './elementMap.js';
import { drawElementMap, drawSlice } from './render.js';
import { PlanController, TILT_LIMIT } from './state.js';
import { GridGeometry, centerIndex, pixelToWorld, sliceCount, worldToPixel } from './slices.js';
import type { CaseInfo, ElementRow, SliceAxis, VolumeChoice } from './types.js';

const api = new ApiClient('');
const controller = new PlanController(api);

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

const caseSelect = el<HTMLSelectElement>('case-select');
const volumeSelect = el<HTMLSelectElement>('volume-select');
const tiltX = el<HTMLInputElement>('tilt-x');
const tiltY = el<HTMLInputElement>('tilt-y');
const tiltXOut = el<HTMLSpanElement>('tilt-x-value');
const tiltYOut = el<HTMLSpanElement>('tilt-y-value');
const naeOut = el<HTMLSpanElement>('nae-value');
const sdrOut = el<HTMLSpanElement>('sdr-value');
const stOut = el<HTMLSpanElement>('st-value');
const targetOut = el<HTMLSpanElement>('target-value');
const statusOut = el<HTMLSpanElement>('status-line');
const countsOut = el<HTMLSpanElement>('overlap-counts');
const maximizeBtn = el<HTMLButtonElement>('maximize-btn');
const simulateBtn = el<HTMLButtonElement>('simulate-btn');
const rmsToggle = el<HTMLInputElement>('rms-toggle');
const jobsList = el<HTMLUListElement>('jobs-list');
const mapCanvas = el<HTMLCanvasElement>('element-map');

const axes: SliceAxis[] = ['x', 'y', 'z'];
const sliceCanvases = axes.map((a) => el<HTMLCanvasElement>(`slice-${a}`));
const sliceSliders = axes.map((a) => el<HTMLInputElement>(`slice-${a}-index`));

let geometry: GridGeometry | null = null;
let caseInfo: CaseInfo | null = null;
let lastElements: ElementRow[] | null = null;
let lastMaxRms: number | null = null;
let activityByChoice: Partial<Record<VolumeChoice, boolean[]>> = {};

function setStatus(text: string): void {
  statusOut.textContent = text;
}

async function loadCases(): Promise<void> {
  const cases = await api.listCases();
  caseSelect.innerHTML = '';
  for (const c of cases) {
    const opt = document.createElement('option');
    opt.value = c.case_id;
    opt.textContent = c.case_id;
    caseSelect.appendChild(opt);
  }
  if (cases.length > 0) {
    await selectCase(cases[0].case_id);
  } else {
    setStatus('no cases registered; POST /cases or use the tfusplan CLI');
  }
}

async function selectCase(caseId: string): Promise<void> {
  caseInfo = await api.getCase(caseId);
  if (!caseInfo.dims || !caseInfo.spacing_mm || !caseInfo.origin_mm) return;
  geometry = {
    dims: caseInfo.dims as [number, number, number],
    spacing: caseInfo.spacing_mm as [number, number, number],
    origin: caseInfo.origin_mm as [number, number, number],
  };
  axes.forEach((a, i) => {
    sliceSliders[i].max = String(sliceCount(geometry!, a) - 1);
    sliceSliders[i].value = String(centerIndex(geometry!, a));
  });
  activityByChoice = {};
  rmsToggle.checked = false;
  rmsToggle.disabled = !caseInfo.has_rms;
  rmsToggle.title = caseInfo.has_rms ? '' : 'run a simulation first';
  controller.setCase(caseId);
  // default target: the volume center
  const c = geometry;
  const center = axes.map((a, i) =>
    c.origin[i] + (c.dims[i] - 1) * 0.5 * c.spacing[i]) as [number, number, number];
  controller.setTarget(center[0], center[1], center[2]);
  await redrawSlices();
}

function currentVolumeKind(): 'rct' | 'sct' | 'rms' {
  return rmsToggle.checked ? 'rms' : (volumeSelect.value as VolumeChoice);
}

async function redrawSlices(): Promise<void> {
  if (!geometry || !controller.state.caseId) return;
  const target = controller.state.target;
  for (let i = 0; i < axes.length; i += 1) {
    const axis = axes[i];
    const index = Number(sliceSliders[i].value);
    const kind = currentVolumeKind();
    // pressure amplitudes live on a different scale than HU
    const url = kind === 'rms' && lastMaxRms
      ? api.sliceUrl(controller.state.caseId, kind, axis, index, lastMaxRms, lastMaxRms / 2)
      : api.sliceUrl(controller.state.caseId, kind, axis, index);
    const dims = geometry.dims;
    const [u, v] = [0, 1, 2].filter((k) => k !== i);
    const cross = target
      ? (() => {
          const p = worldToPixel(geometry!, axis, target as [number, number, number]);
          return { px: p.px, py: p.py };
        })()
      : null;
    try {
      await drawSlice(sliceCanvases[i], url, [dims[u], dims[v]], cross);
    } catch {
      // rms not available yet, or the slice failed to load; leave the pane
    }
  }
}

async function refreshElements(): Promise<void> {
  const s = controller.state;
  if (!s.caseId || !s.target || !s.plan) return;
  const body = {
    target: s.target as [number, number, number],
    tilt_x: s.tiltX,
    tilt_y: s.tiltY,
    volume_choice: s.volumeChoice,
  };
  lastElements = await api.elements(s.caseId, body);
  activityByChoice[s.volumeChoice] = s.plan.active;
  const rct = activityByChoice.rct;
  const sct = activityByChoice.sct;
  if (rct && sct && rct.length === sct.length) {
    const cats = categorize(rct, sct);
    const counts = categoryCounts(cats);
    countsOut.textContent =
      `both active ${counts.both_active} | both inactive ${counts.both_inactive} | ` +
      `rct-only ${counts.rct_only} | sct-only ${counts.sct_only} | total ${countsTotal(counts)}`;
    drawElementMap(mapCanvas, lastElements, cats);
  } else {
    countsOut.textContent = 'plan both volumes to see the overlap map';
    drawElementMap(mapCanvas, lastElements, null);
  }
}

controller.onChange((s) => {
  tiltXOut.textContent = s.tiltX.toFixed(1);
  tiltYOut.textContent = s.tiltY.toFixed(1);
  tiltX.value = String(s.tiltX);
  tiltY.value = String(s.tiltY);
  targetOut.textContent = s.target
    ? s.target.map((v) => v.toFixed(1)).join(', ')
    : '-';
  if (s.plan) {
    naeOut.textContent = String(s.plan.nae);
    sdrOut.textContent = s.plan.sdr.toFixed(3);
    stOut.textContent = `${s.plan.st_mean_mm.toFixed(2)} mm`;
  } else {
    naeOut.textContent = sdrOut.textContent = stOut.textContent = '-';
  }
  setStatus(s.error ? `error: ${s.error}` : s.pending ? 'planning...' : 'ready');
  if (s.plan && !s.pending) void refreshElements();
});

caseSelect.addEventListener('change', () => void selectCase(caseSelect.value));
el<HTMLButtonElement>('reg-btn').addEventListener('click', async () => {
  const caseId = el<HTMLInputElement>('reg-id').value.trim();
  const rctPath = el<HTMLInputElement>('reg-rct').value.trim();
  const sctPath = el<HTMLInputElement>('reg-sct').value.trim();
  if (!caseId || !rctPath) {
    setStatus('registration needs a case id and an rct path');
    return;
  }
  try {
    await api.registerCase(caseId, rctPath, sctPath || undefined);
    await loadCases();
    caseSelect.value = caseId;
    await selectCase(caseId);
  } catch (err) {
    setStatus(`error: ${err instanceof Error ? err.message : String(err)}`);
  }
});
volumeSelect.addEventListener('change', () => {
  controller.setVolumeChoice(volumeSelect.value as VolumeChoice);
  void redrawSlices();
});
tiltX.addEventListener('input', () =>
  controller.setTilt(Number(tiltX.value), controller.state.tiltY));
tiltY.addEventListener('input', () =>
  controller.setTilt(controller.state.tiltX, Number(tiltY.value)));
maximizeBtn.addEventListener('click', () => void controller.maximizeNae());
rmsToggle.addEventListener('change', () => void redrawSlices());
sliceSliders.forEach((slider) => slider.addEventListener('input', () => void redrawSlices()));

sliceCanvases.forEach((canvas, i) => {
  canvas.addEventListener('click', (ev) => {
    if (!geometry) return;
    const rect = canvas.getBoundingClientRect();
    const axis = axes[i];
    const dims = geometry.dims;
    const [u, v] = [0, 1, 2].filter((k) => k !== i);
    const px = Math.floor(((ev.clientX - rect.left) / rect.width) * dims[u]);
    const py = Math.floor(((ev.clientY - rect.top) / rect.height) * dims[v]);
    const world = pixelToWorld(geometry, axis, Number(sliceSliders[i].value), px, py);
    controller.setTarget(world[0], world[1], world[2]);
    void redrawSlices();
  });
});

simulateBtn.addEventListener('click', async () => {
  const jobId = await controller.submitSimulation();
  if (!jobId) return;
  const tick = async (): Promise<void> => {
    const status = await controller.refreshJob(jobId);
    renderJobs();
    if (status.state === 'queued' || status.state === 'running') {
      setTimeout(() => void tick(), 1000);
    } else if (status.state === 'done' && caseInfo) {
      caseInfo.has_rms = true;
      lastMaxRms = status.result?.max_rms_pa ?? null;
      rmsToggle.disabled = false;
      rmsToggle.title = '';
    }
  };
  void tick();
});

function renderJobs(): void {
  jobsList.innerHTML = '';
  for (const job of controller.state.jobs) {
    const li = document.createElement('li');
    const pct = Math.round(job.progress * 100);
    li.textContent = job.result
      ? `${job.job_id}: ${job.state}, max RMS ${job.result.max_rms_pa.toExponential(3)} Pa, ` +
        `shift ${job.result.focal_shift_mm.toFixed(2)} mm`
      : `${job.job_id}: ${job.state} (${pct}%)${job.error ? ` - ${job.error}` : ''}`;
    jobsList.appendChild(li);
  }
}

tiltX.min = tiltY.min = String(-TILT_LIMIT);
tiltX.max = tiltY.max = String(TILT_LIMIT);
tiltX.step = tiltY.step = '0.5';

void loadCases();
