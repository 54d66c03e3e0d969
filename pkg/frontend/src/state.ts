/** Client-side session state for one scene.
 *
 * Invariants the tests rely on:
 *  - at most one trajectory mutation is in flight at a time; rapid edits
 *    coalesce into a trailing commit;
 *  - preview frames are dropped unless their server version matches the
 *    current trajectory version (no stale frames ever displayed);
 *  - reloading state from the server reconstructs the keyframe list.
 */

import {
  ApiClient,
  JobStatus,
  MetricReportDoc,
  PoseDoc,
  ShapeParams,
  TrajectoryDoc,
} from "./api.js";

export const IDENTITY_POSE: PoseDoc = { r: [1, 0, 0, 0, 1, 0, 0, 0, 1], t: [0, 0, 0] };

export const T_NS_CHOICES = [600, 800, 900, 1000, "off"] as const;
export type TnsChoice = (typeof T_NS_CHOICES)[number];

export interface CloudBuffers {
  positions: Float32Array; // xyz triples
  colors: Uint8Array; // rgb triples
  count: number;
  totalPoints: number;
}

type Listener = (...args: unknown[]) => void;

class Emitter {
  private listeners = new Map<string, Set<Listener>>();

  on(event: string, fn: Listener): () => void {
    if (!this.listeners.has(event)) this.listeners.set(event, new Set());
    this.listeners.get(event)!.add(fn);
    return () => this.listeners.get(event)?.delete(fn);
  }

  emit(event: string, ...args: unknown[]): void {
    this.listeners.get(event)?.forEach((fn) => fn(...args));
  }
}

export class SceneSession extends Emitter {
  cloud: CloudBuffers | null = null;
  keyframes: PoseDoc[] = [];
  nFrames = 16;
  kernel = 3;
  tNs: TnsChoice = 900;
  seed = 0;
  steps = 50;
  denoiser: ShapeParams["denoiser"] = "pull";

  version = 0;
  previewFrames: (ArrayBuffer | null)[] = [];
  previewVersions: number[] = [];
  playing = false;
  playbackFps = 8;
  playbackIndex = 0;

  shapedFrames: (ArrayBuffer | null)[] = [];
  activeJob: JobStatus | null = null;
  lastReport: MetricReportDoc | null = null;
  offline = false;

  private mutationChain: Promise<void> = Promise.resolve();
  private commitQueued = false;
  mutationsInFlight = 0; // observable for tests: must never exceed 1

  constructor(
    public api: ApiClient,
    public sceneId: string,
  ) {
    super();
  }

  get previewEnabled(): boolean {
    return this.keyframes.length >= 2;
  }

  async loadCloud(maxPoints = 40000): Promise<CloudBuffers> {
    const doc = await this.api.pointcloud(this.sceneId, maxPoints);
    const positions = new Float32Array(doc.positions.length * 3);
    const colors = new Uint8Array(doc.colors.length * 3);
    doc.positions.forEach((p, i) => positions.set(p, i * 3));
    doc.colors.forEach((c, i) => colors.set(c.map((v) => Math.round(v * 255)), i * 3));
    this.cloud = {
      positions,
      colors,
      count: doc.positions.length,
      totalPoints: doc.total_points,
    };
    this.emit("cloud", this.cloud);
    return this.cloud;
  }

  /** Rebuild local state from the server (page reload / reconnect). */
  async reloadFromServer(): Promise<TrajectoryDoc> {
    const doc = await this.api.getTrajectory(this.sceneId);
    this.keyframes = doc.keyframes;
    this.nFrames = doc.n_frames;
    this.version = doc.version;
    this.resetPreviewStrip();
    this.emit("trajectory", doc);
    return doc;
  }

  // --- keyframe editing -------------------------------------------------

  addKeyframe(pose: PoseDoc): void {
    this.keyframes.push(pose);
    this.emit("keyframes", this.keyframes);
    this.scheduleCommit();
  }

  updateKeyframe(index: number, pose: PoseDoc): void {
    if (index < 0 || index >= this.keyframes.length) return;
    this.keyframes[index] = pose;
    this.emit("keyframes", this.keyframes);
    this.scheduleCommit();
  }

  removeKeyframe(index: number): void {
    if (this.keyframes.length <= 2) return; // the designer keeps >= 2 keys
    this.keyframes.splice(index, 1);
    this.emit("keyframes", this.keyframes);
    this.scheduleCommit();
  }

  setNFrames(n: number): void {
    this.nFrames = n;
    this.scheduleCommit();
  }

  /** Serialize mutations: one in flight, at most one trailing commit queued. */
  private scheduleCommit(): void {
    if (!this.previewEnabled) return;
    if (this.commitQueued) return;
    this.commitQueued = true;
    this.mutationChain = this.mutationChain.then(() => this.runCommit());
  }

  private async runCommit(): Promise<void> {
    this.commitQueued = false;
    this.mutationsInFlight += 1;
    try {
      const resp = await this.api.putTrajectory(this.sceneId, this.keyframes, this.nFrames);
      this.version = resp.version;
      this.offline = false;
      this.resetPreviewStrip();
      this.emit("version", this.version);
    } catch (err) {
      this.offline = true;
      this.emit("error", err);
    } finally {
      this.mutationsInFlight -= 1;
    }
  }

  /** Resolves when every queued mutation has been acknowledged. */
  async flush(): Promise<void> {
    let last: Promise<void>;
    do {
      last = this.mutationChain;
      await last;
    } while (last !== this.mutationChain);
  }

  // --- preview strip ------------------------------------------------------

  private resetPreviewStrip(): void {
    this.previewFrames = new Array(this.nFrames).fill(null);
    this.previewVersions = new Array(this.nFrames).fill(-1);
  }

  /** Accept a fetched frame only if it belongs to the current version. */
  receivePreview(index: number, bytes: ArrayBuffer, version: number): boolean {
    if (version !== this.version) return false; // stale: discard
    if (index < 0 || index >= this.previewFrames.length) return false;
    this.previewFrames[index] = bytes;
    this.previewVersions[index] = version;
    this.emit("preview", index);
    return true;
  }

  /** Fetch all preview frames in order, discarding stale responses. */
  async refreshPreviews(radius = 1): Promise<number> {
    if (!this.previewEnabled) return 0;
    const want = this.version;
    let accepted = 0;
    for (let i = 0; i < this.nFrames; i++) {
      if (this.version !== want) break; // a newer trajectory landed mid-strip
      const { bytes, version } = await this.api.previewFrame(this.sceneId, i, radius);
      if (this.receivePreview(i, bytes, version)) accepted += 1;
    }
    return accepted;
  }

  get previewComplete(): boolean {
    return this.previewFrames.length > 0 && this.previewFrames.every((f) => f !== null);
  }

  // --- shaping ---------------------------------------------------------------

  shapeParams(): ShapeParams {
    return {
      t_ns: this.tNs === "off" ? "off" : this.tNs,
      seed: this.seed,
      steps: this.steps,
      denoiser: this.denoiser,
      kernel: this.kernel,
    };
  }

  async launchShaping(): Promise<JobStatus> {
    const jobId = await this.api.launchShaping(this.sceneId, this.shapeParams());
    this.activeJob = await this.api.jobStatus(this.sceneId, jobId);
    this.emit("job", this.activeJob);
    return this.activeJob;
  }

  async pollShaping(intervalMs = 150, timeoutMs = 120000): Promise<JobStatus> {
    if (!this.activeJob) throw new Error("no active shaping job");
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.api.jobStatus(this.sceneId, this.activeJob.job_id);
      this.activeJob = status;
      this.emit("job", status);
      if (status.status === "done" || status.status === "error") return status;
      if (Date.now() > deadline) throw new Error("shaping job timed out");
      await new Promise((r) => setTimeout(r, intervalMs));
    }
  }

  async fetchShapedFrames(): Promise<void> {
    if (!this.activeJob || this.activeJob.status !== "done") return;
    this.shapedFrames = new Array(this.activeJob.n_frames).fill(null);
    for (let i = 0; i < this.activeJob.n_frames; i++) {
      this.shapedFrames[i] = await this.api.jobFrame(this.sceneId, this.activeJob.job_id, i);
      this.emit("shaped", i);
    }
  }

  // --- metrics ------------------------------------------------------------------

  async compareAgainst(trajectory: object): Promise<MetricReportDoc> {
    this.lastReport = await this.api.metricsUpload(this.sceneId, trajectory);
    this.emit("report", this.lastReport);
    return this.lastReport;
  }
}
