/** Typed client for the camscene HTTP API. The UI never duplicates geometry
 * math beyond gizmo visualization; everything authoritative comes from here. */

export interface PoseDoc {
  r: number[]; // 9 values, row-major rotation
  t: number[]; // 3 values
}

export interface TrajectoryDoc {
  version: number;
  n_frames: number;
  keyframes: PoseDoc[];
  poses: PoseDoc[];
}

export interface CloudPayload {
  positions: number[][];
  colors: number[][];
  total_points: number;
  stride: number;
}

export interface MetricReportDoc {
  rot_err: number;
  trans_err_relative: number;
  trans_err_metric: number;
  cam_mc_relative: number;
  cam_mc_metric: number;
  n_frames: number;
  scene_scale_gt: number;
  scene_scale_gen: number;
}

export interface JobStatus {
  job_id: string;
  status: "pending" | "running" | "done" | "error" | "interrupted";
  n_frames: number;
  error: string;
}

export interface ShapeParams {
  t_ns: number | "off";
  seed: number;
  steps: number;
  denoiser: "oracle" | "pull" | "noise";
  kernel?: number;
  schedule?: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

async function failFrom(resp: Response): Promise<never> {
  let body: ApiErrorBody = { code: "unknown", message: resp.statusText, detail: "" };
  try {
    body = (await resp.json()) as ApiErrorBody;
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(resp.status, body);
}

export class ApiClient {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async health(): Promise<{ status: string; scenes: number }> {
    const resp = await fetch(this.url("/healthz"));
    if (!resp.ok) return failFrom(resp);
    return resp.json();
  }

  async createScene(image: Blob, depth: Blob, intrinsics: Blob): Promise<string> {
    const form = new FormData();
    form.append("image", image, "image.png");
    form.append("depth", depth, "depth.pfm");
    form.append("intrinsics", intrinsics, "intrinsics.json");
    const resp = await fetch(this.url("/scenes"), { method: "POST", body: form });
    if (!resp.ok) return failFrom(resp);
    const doc = await resp.json();
    return doc.scene_id as string;
  }

  async pointcloud(sceneId: string, maxPoints: number): Promise<CloudPayload> {
    const resp = await fetch(
      this.url(`/scenes/${sceneId}/pointcloud?max_points=${maxPoints}`),
    );
    if (!resp.ok) return failFrom(resp);
    return resp.json();
  }

  async getTrajectory(sceneId: string): Promise<TrajectoryDoc> {
    const resp = await fetch(this.url(`/scenes/${sceneId}/trajectory`));
    if (!resp.ok) return failFrom(resp);
    return resp.json();
  }

  async putTrajectory(
    sceneId: string,
    keyframes: PoseDoc[],
    nFrames: number,
  ): Promise<{ version: number; n_frames: number }> {
    const resp = await fetch(this.url(`/scenes/${sceneId}/trajectory`), {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ keyframes, n_frames: nFrames }),
    });
    if (!resp.ok) return failFrom(resp);
    return resp.json();
  }

  /** Fetch one preview frame; returns the PNG bytes and the trajectory
   * version the server rendered it for. */
  async previewFrame(
    sceneId: string,
    frame: number,
    radius = 1,
  ): Promise<{ bytes: ArrayBuffer; version: number }> {
    const resp = await fetch(this.url(`/scenes/${sceneId}/preview/${frame}?radius=${radius}`));
    if (!resp.ok) return failFrom(resp);
    const version = Number(resp.headers.get("x-trajectory-version") ?? "-1");
    return { bytes: await resp.arrayBuffer(), version };
  }

  async maskFrame(sceneId: string, frame: number, k = 3): Promise<ArrayBuffer> {
    const resp = await fetch(this.url(`/scenes/${sceneId}/masks/${frame}?k=${k}`));
    if (!resp.ok) return failFrom(resp);
    return resp.arrayBuffer();
  }

  async launchShaping(sceneId: string, params: ShapeParams): Promise<string> {
    const resp = await fetch(this.url(`/scenes/${sceneId}/shape`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(params),
    });
    if (!resp.ok) return failFrom(resp);
    const doc = await resp.json();
    return doc.job_id as string;
  }

  async jobStatus(sceneId: string, jobId: string): Promise<JobStatus> {
    const resp = await fetch(this.url(`/scenes/${sceneId}/shape/${jobId}`));
    if (!resp.ok) return failFrom(resp);
    return resp.json();
  }

  async jobFrame(sceneId: string, jobId: string, frame: number): Promise<ArrayBuffer> {
    const resp = await fetch(this.url(`/scenes/${sceneId}/shape/${jobId}/frames/${frame}`));
    if (!resp.ok) return failFrom(resp);
    return resp.arrayBuffer();
  }

  async metricsUpload(sceneId: string, trajectory: object): Promise<MetricReportDoc> {
    const resp = await fetch(this.url(`/scenes/${sceneId}/metrics`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ trajectory }),
    });
    if (!resp.ok) return failFrom(resp);
    return resp.json();
  }
}
