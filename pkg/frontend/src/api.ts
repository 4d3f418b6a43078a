/**
 * Typed client for the annotation service HTTP API.
 *
 * Workflow code depends only on the AnnotationService interface so
 * tests can substitute a mock; HttpAnnotationService is the fetch-based
 * implementation used in the browser.
 */

import { Mat3, Vec3 } from "./matrix.js";

export interface SceneSummary {
  scene_id: number;
  view_count: number;
  object_count: number;
  status: string;
}

export interface PoseRecord {
  obj_id: number;
  rotation: number[];
  translation: number[];
}

export interface AnnotationDoc {
  scene_id?: number;
  ref_view_id: number;
  poses: PoseRecord[];
}

export interface OverlayRequest {
  obj_id: number;
  rotation: Mat3;
  translation: Vec3;
  tint?: number[];
  alpha?: number;
}

export interface Job {
  job_id: string;
  scene_id: number;
  kind: string;
  status: "running" | "done" | "error";
  detail: string;
}

export interface GtEntryRecord {
  obj_id: number;
  cam_R_m2c: number[];
  cam_t_m2c: number[];
}

export interface AnnotationService {
  listScenes(): Promise<SceneSummary[]>;
  viewUrl(sceneId: number, viewId: number, layer: "rgb" | "depth_vis"): string;
  renderOverlay(sceneId: number, viewId: number,
                request: OverlayRequest): Promise<Blob>;
  getAnnotation(sceneId: number): Promise<AnnotationDoc | null>;
  putAnnotation(sceneId: number, doc: AnnotationDoc): Promise<void>;
  propagate(sceneId: number): Promise<Job>;
  generateMasks(sceneId: number): Promise<Job>;
  getJob(jobId: string): Promise<Job>;
  getGroundTruth(sceneId: number): Promise<Record<string, GtEntryRecord[]>>;
}

/** Error carrying the HTTP status so the UI can phrase 409/412 nicely. */
export class ServiceError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function parseError(response: Response): Promise<ServiceError> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body.detail) {
      detail = String(body.detail);
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ServiceError(response.status, detail);
}

export class HttpAnnotationService implements AnnotationService {
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.base + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return response.json() as Promise<T>;
  }

  listScenes(): Promise<SceneSummary[]> {
    return this.request("/api/scenes");
  }

  viewUrl(sceneId: number, viewId: number, layer: "rgb" | "depth_vis"): string {
    return `${this.base}/api/scenes/${sceneId}/views/${viewId}?layer=${layer}`;
  }

  async renderOverlay(sceneId: number, viewId: number,
                      request: OverlayRequest): Promise<Blob> {
    const response = await fetch(
      `${this.base}/api/scenes/${sceneId}/views/${viewId}/overlay`,
      { method: "POST", headers: { "content-type": "application/json" },
        body: JSON.stringify(request) });
    if (!response.ok) {
      throw await parseError(response);
    }
    return response.blob();
  }

  async getAnnotation(sceneId: number): Promise<AnnotationDoc | null> {
    try {
      return await this.request(`/api/scenes/${sceneId}/annotation`);
    } catch (e) {
      if (e instanceof ServiceError && e.status === 404) {
        return null;
      }
      throw e;
    }
  }

  async putAnnotation(sceneId: number, doc: AnnotationDoc): Promise<void> {
    await this.request(`/api/scenes/${sceneId}/annotation`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
  }

  propagate(sceneId: number): Promise<Job> {
    return this.request(`/api/scenes/${sceneId}/propagate`, { method: "POST" });
  }

  generateMasks(sceneId: number): Promise<Job> {
    return this.request(`/api/scenes/${sceneId}/masks`, { method: "POST" });
  }

  getJob(jobId: string): Promise<Job> {
    return this.request(`/api/jobs/${jobId}`);
  }

  getGroundTruth(sceneId: number): Promise<Record<string, GtEntryRecord[]>> {
    return this.request(`/api/scenes/${sceneId}/gt`);
  }
}
