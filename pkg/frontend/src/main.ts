/** DOM wiring: binds the session controller to the page controls. */

import { ApiClient } from './api.js';
import { parsePgm, parseStlBinary } from './mesh.js';
import { SessionController, THRESHOLD_MAX, THRESHOLD_MIN, ViewState } from './state.js';
import { MeshViewer } from './viewer.js';

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const controller = new SessionController(new ApiClient(''));

const fileInput = $<HTMLInputElement>('mesh-file');
const uploadBtn = $<HTMLButtonElement>('upload');
const statusLine = $('status');
const progressBar = $<HTMLProgressElement>('progress');
const errorBox = $('error');
const explorer = $('explorer');
const sliceSlider = $<HTMLInputElement>('slice');
const sliceLabel = $('slice-label');
const sliceCanvas = $<HTMLCanvasElement>('slice-view');
const thresholdSlider = $<HTMLInputElement>('threshold');
const thresholdLabel = $('threshold-label');
const statsLine = $('stats');
const downloadStl = $<HTMLButtonElement>('download-stl');
const downloadObj = $<HTMLButtonElement>('download-obj');
const previewCanvas = $<HTMLCanvasElement>('preview');

thresholdSlider.min = String(THRESHOLD_MIN);
thresholdSlider.max = String(THRESHOLD_MAX);
thresholdSlider.step = '0.01';

let viewer: MeshViewer | null = null;
try {
  viewer = new MeshViewer(previewCanvas);
} catch {
  previewCanvas.replaceWith('3D preview unavailable');
}

uploadBtn.addEventListener('click', async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  const format = file.name.toLowerCase().endsWith('.obj') ? 'obj' : 'auto';
  await controller.upload(await file.arrayBuffer(), format);
});

sliceSlider.addEventListener('input', () => {
  void controller.loadSlice(Number(sliceSlider.value));
});

thresholdSlider.addEventListener('input', () => {
  controller.setThreshold(Number(thresholdSlider.value));
});
// extraction fires on release, not while dragging
thresholdSlider.addEventListener('change', () => {
  controller.setThreshold(Number(thresholdSlider.value));
  void controller.requestExtract();
});

async function saveDownload(format: 'stl' | 'obj') {
  const buf = await controller.download(format);
  if (!buf) return;
  const a = document.createElement('a');
  a.href = URL.createObjectURL(new Blob([buf]));
  a.download = `region.${format}`;
  a.click();
  URL.revokeObjectURL(a.href);
  if (format === 'stl' && viewer) {
    try {
      viewer.setMesh(parseStlBinary(buf));
    } catch {
      /* stats-only fallback */
    }
  }
}
downloadStl.addEventListener('click', () => void saveDownload('stl'));
downloadObj.addEventListener('click', () => void saveDownload('obj'));

let renderedStatsForMesh: string | null = null;

function render(state: ViewState) {
  statusLine.textContent = {
    idle: 'choose a mesh file to begin',
    uploading: 'uploading…',
    processing: state.retrying ? 'estimating… (connection lost, retrying)' : 'estimating…',
    ready: 'done: explore slices and extract a region',
    failed: 'failed',
  }[state.phase];
  progressBar.value = state.progress;
  errorBox.textContent = state.error ?? '';
  explorer.style.display = state.phase === 'ready' ? 'block' : 'none';

  if (state.phase === 'ready' && state.modelId && state.jobId) {
    const hash = `#model=${state.modelId}&job=${state.jobId}`;
    if (location.hash !== hash) history.replaceState(null, '', hash);
  }
  if (state.sliceCount > 0) {
    sliceSlider.max = String(state.sliceCount - 1);
    sliceSlider.value = String(state.sliceIndex);
    sliceLabel.textContent = `slice ${state.sliceIndex} / ${state.sliceCount - 1}`;
  }
  if (state.slice) drawSlice(state.slice);
  thresholdLabel.textContent = `threshold ${state.threshold.toFixed(2)}`;
  if (state.stats) {
    statsLine.textContent =
      `${state.stats.voxels_above.toLocaleString()} voxels above, ` +
      `${state.stats.triangles.toLocaleString()} triangles` +
      (state.extracting ? ' (updating…)' : '');
    if (viewer && renderedStatsForMesh !== state.stats.mesh_id) {
      renderedStatsForMesh = state.stats.mesh_id;
      void controller.download('stl').then((buf) => {
        if (buf && viewer) {
          try {
            viewer.setMesh(parseStlBinary(buf));
          } catch {
            /* stats-only fallback */
          }
        }
      });
    }
  } else {
    statsLine.textContent = state.extracting ? 'extracting…' : '';
  }
  downloadStl.disabled = downloadObj.disabled = !state.downloadReady;
}

function drawSlice(buf: ArrayBuffer) {
  try {
    const img = parsePgm(buf);
    sliceCanvas.width = img.width;
    sliceCanvas.height = img.height;
    const ctx = sliceCanvas.getContext('2d');
    if (!ctx) return;
    const rgba = new Uint8ClampedArray(img.width * img.height * 4);
    for (let i = 0; i < img.pixels.length; i++) {
      rgba[i * 4] = rgba[i * 4 + 1] = rgba[i * 4 + 2] = img.pixels[i];
      rgba[i * 4 + 3] = 255;
    }
    ctx.putImageData(new ImageData(rgba, img.width, img.height), 0, 0);
  } catch {
    /* leave the previous slice on screen */
  }
}

controller.subscribe(render);
render(controller.state);

// restore a session from ids in the URL
const params = new URLSearchParams(location.hash.slice(1));
const restoredModel = params.get('model');
const restoredJob = params.get('job');
if (restoredModel && restoredJob) {
  void controller.restore(restoredModel, restoredJob);
}
