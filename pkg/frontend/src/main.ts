/** DOM wiring for the trajectory designer. */

import { ApiClient, ApiError, MetricReportDoc } from "./api.js";
import { IDENTITY_POSE, SceneSession, T_NS_CHOICES, TnsChoice } from "./state.js";
import { CloudViewer } from "./viewer.js";

const api = new ApiClient("");
let session: SceneSession | null = null;
let viewer: CloudViewer | null = null;
let playTimer: number | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string, isError = true): void {
  const box = el<HTMLDivElement>("toasts");
  const t = document.createElement("div");
  t.className = isError ? "toast error" : "toast";
  t.textContent = message;
  box.appendChild(t);
  setTimeout(() => t.remove(), 5000);
}

function setConnected(ok: boolean): void {
  document.querySelectorAll<HTMLButtonElement>("button[data-mutates]").forEach((b) => {
    b.disabled = !ok || !session;
  });
  el<HTMLSpanElement>("status").textContent = ok ? "connected" : "disconnected";
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.body.code}: ${err.body.message}`;
  return String(err);
}

async function guard<T>(work: () => Promise<T>): Promise<T | undefined> {
  try {
    const out = await work();
    setConnected(true);
    return out;
  } catch (err) {
    if (err instanceof TypeError) setConnected(false); // network failure
    toast(describeError(err));
    return undefined;
  }
}

function bytesToUrl(bytes: ArrayBuffer): string {
  return URL.createObjectURL(new Blob([bytes], { type: "image/png" }));
}

function renderStrip(container: HTMLElement, frames: (ArrayBuffer | null)[]): void {
  container.replaceChildren();
  frames.forEach((bytes, i) => {
    const img = document.createElement("img");
    img.className = "frame";
    img.title = `frame ${i}`;
    if (bytes) img.src = bytesToUrl(bytes);
    container.appendChild(img);
  });
}

function renderReport(report: MetricReportDoc): void {
  const rows: Array<[string, number]> = [
    ["RotErr (rad)", report.rot_err],
    ["TransErr relative", report.trans_err_relative],
    ["TransErr metric", report.trans_err_metric],
    ["CamMC relative", report.cam_mc_relative],
    ["CamMC metric", report.cam_mc_metric],
    ["scene scale gt", report.scene_scale_gt],
    ["scene scale gen", report.scene_scale_gen],
  ];
  const table = el<HTMLTableElement>("report");
  table.replaceChildren();
  for (const [name, value] of rows) {
    const tr = document.createElement("tr");
    tr.innerHTML = `<td>${name}</td><td>${value.toFixed(5)}</td>`;
    table.appendChild(tr);
  }
}

function attachSession(s: SceneSession): void {
  session = s;
  const canvas = el<HTMLCanvasElement>("viewer");
  viewer = new CloudViewer(canvas, {
    onKeyframeMoved: (i, pose) => s.updateKeyframe(i, pose),
    onKeyframePlaced: (pose) => {
      s.addKeyframe(pose);
      viewer?.setKeyframes(s.keyframes);
    },
  });
  s.on("cloud", () => viewer?.setCloud(s.cloud!));
  s.on("keyframes", () => {
    viewer?.setKeyframes(s.keyframes);
    el<HTMLSpanElement>("kf-count").textContent = String(s.keyframes.length);
  });
  s.on("version", () => {
    el<HTMLSpanElement>("version").textContent = String(s.version);
    void guard(async () => {
      await s.refreshPreviews();
      renderStrip(el("preview-strip"), s.previewFrames);
    });
  });
  s.on("error", (err) => toast(describeError(err)));
  el<HTMLSpanElement>("scene-id").textContent = s.sceneId;
  setConnected(true);
}

async function createScene(): Promise<void> {
  const image = el<HTMLInputElement>("file-image").files?.[0];
  const depth = el<HTMLInputElement>("file-depth").files?.[0];
  const intrinsics = el<HTMLInputElement>("file-intrinsics").files?.[0];
  if (!image || !depth || !intrinsics) {
    toast("select image, depth and intrinsics files first");
    return;
  }
  await guard(async () => {
    const sceneId = await api.createScene(image, depth, intrinsics);
    const s = new SceneSession(api, sceneId);
    attachSession(s);
    await s.loadCloud();
    // seed a 4-keyframe dolly to edit, expanded to 16 frames by default
    for (let i = 0; i < 4; i++) {
      s.addKeyframe({ ...IDENTITY_POSE, t: [0, 0, -0.12 * i] });
    }
    await s.flush();
  });
}

function wireControls(): void {
  el<HTMLButtonElement>("btn-create").addEventListener("click", () => void createScene());

  el<HTMLInputElement>("n-frames").addEventListener("change", (e) => {
    session?.setNFrames(Number((e.target as HTMLInputElement).value));
  });

  const tnsSelect = el<HTMLSelectElement>("t-ns");
  T_NS_CHOICES.forEach((v) => {
    const opt = document.createElement("option");
    opt.value = String(v);
    opt.textContent = String(v);
    if (v === 900) opt.selected = true;
    tnsSelect.appendChild(opt);
  });
  tnsSelect.addEventListener("change", () => {
    if (!session) return;
    const raw = tnsSelect.value;
    session.tNs = (raw === "off" ? "off" : Number(raw)) as TnsChoice;
  });

  el<HTMLInputElement>("seed").addEventListener("change", (e) => {
    if (session) session.seed = Number((e.target as HTMLInputElement).value);
  });

  el<HTMLButtonElement>("btn-play").addEventListener("click", () => {
    if (!session) return;
    session.playing = !session.playing;
    if (playTimer !== null) {
      clearInterval(playTimer);
      playTimer = null;
    }
    if (session.playing) {
      playTimer = setInterval(() => {
        if (!session?.previewComplete) return;
        session.playbackIndex = (session.playbackIndex + 1) % session.previewFrames.length;
        const bytes = session.previewFrames[session.playbackIndex];
        if (bytes) el<HTMLImageElement>("playback").src = bytesToUrl(bytes);
      }, 1000 / (session.playbackFps || 8)) as unknown as number;
    }
  });

  el<HTMLButtonElement>("btn-shape").addEventListener("click", () => {
    void guard(async () => {
      if (!session) return;
      await session.launchShaping();
      const status = await session.pollShaping();
      if (status.status === "error") {
        toast(`shaping failed: ${status.error}`);
        return;
      }
      await session.fetchShapedFrames();
      renderStrip(el("shaped-strip"), session.shapedFrames);
      toast("shaping finished", false);
    });
  });

  el<HTMLInputElement>("file-compare").addEventListener("change", (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (!file || !session) return;
    void guard(async () => {
      const doc = JSON.parse(await file.text());
      const report = await session!.compareAgainst(doc);
      renderReport(report);
    });
  });
}

window.addEventListener("DOMContentLoaded", () => {
  wireControls();
  setConnected(false);
  void guard(() => api.health()).then((h) => {
    if (h) setConnected(true);
  });
});
