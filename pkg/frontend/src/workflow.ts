/**
 * Workflow actions: save, propagate, generate masks, review a view.
 *
 * Each action checks its gate before touching the service, reports
 * HTTP 409/412 responses as actionable messages, and records every
 * state change through the store so the session stays replayable.
 */

import { AnnotationService, OverlayRequest, ServiceError } from "./api.js";
import { Mat3, Vec3 } from "./matrix.js";
import { Store, canGenerateMasks, canPropagate, canSave } from "./state.js";

export function describeError(error: unknown): string {
  if (error instanceof ServiceError) {
    if (error.status === 409) {
      return `busy: ${error.message} — wait for the running job to finish`;
    }
    if (error.status === 412) {
      return `not ready: ${error.message}`;
    }
    return `service error ${error.status}: ${error.message}`;
  }
  return error instanceof Error ? error.message : String(error);
}

export async function saveAnnotation(store: Store,
                                     service: AnnotationService): Promise<boolean> {
  const state = store.state;
  if (!canSave(state) || state.sceneId === null) {
    store.dispatch({ type: "notice",
                     message: "pose at least one object before saving" });
    return false;
  }
  const poses = Object.entries(state.posed).map(([objId, pose]) => ({
    obj_id: Number(objId),
    rotation: [...pose.rotation],
    translation: [...pose.translation],
  }));
  try {
    await service.putAnnotation(state.sceneId,
                                { ref_view_id: state.refViewId, poses });
  } catch (error) {
    store.dispatch({ type: "notice", message: describeError(error) });
    return false;
  }
  store.dispatch({ type: "annotation-saved" });
  return true;
}

export async function propagateScene(store: Store,
                                     service: AnnotationService): Promise<boolean> {
  const state = store.state;
  if (!canPropagate(state) || state.sceneId === null) {
    store.dispatch({ type: "notice",
                     message: "save the annotation before propagating" });
    return false;
  }
  try {
    const job = await service.propagate(state.sceneId);
    store.dispatch({ type: "propagate-finished", jobId: job.job_id });
    return true;
  } catch (error) {
    store.dispatch({ type: "notice", message: describeError(error) });
    return false;
  }
}

export async function generateMasks(store: Store, service: AnnotationService,
                                    pollIntervalMs = 500): Promise<boolean> {
  const state = store.state;
  if (!canGenerateMasks(state) || state.sceneId === null) {
    store.dispatch({ type: "notice",
                     message: "propagate the annotation before generating masks" });
    return false;
  }
  let job;
  try {
    job = await service.generateMasks(state.sceneId);
  } catch (error) {
    store.dispatch({ type: "notice", message: describeError(error) });
    return false;
  }
  store.dispatch({ type: "masks-started", jobId: job.job_id });
  while (job.status === "running") {
    await new Promise((resolve) => setTimeout(resolve, pollIntervalMs));
    job = await service.getJob(job.job_id);
    store.dispatch({ type: "job-updated",
                     job: { id: job.job_id, kind: job.kind,
                            status: job.status, detail: job.detail } });
  }
  return job.status === "done";
}

/**
 * Show another view with the service's propagated pose for the selected
 * object.  The pose is used verbatim: the client never re-derives it.
 */
export async function reviewView(
    store: Store, service: AnnotationService, viewId: number,
    requestOverlay: (viewId: number, request: OverlayRequest) => void,
): Promise<boolean> {
  const state = store.state;
  if (state.sceneId === null || !state.propagated) {
    store.dispatch({ type: "notice",
                     message: "propagate before reviewing other views" });
    return false;
  }
  let gt;
  try {
    gt = await service.getGroundTruth(state.sceneId);
  } catch (error) {
    store.dispatch({ type: "notice", message: describeError(error) });
    return false;
  }
  const entries = gt[String(viewId)] ?? [];
  const entry = entries.find((e) => e.obj_id === state.objId) ?? entries[0];
  if (!entry) {
    store.dispatch({ type: "notice",
                     message: `no propagated pose for view ${viewId}` });
    return false;
  }
  store.dispatch({ type: "view-selected", viewId });
  requestOverlay(viewId, {
    obj_id: entry.obj_id,
    rotation: [...entry.cam_R_m2c] as Mat3,
    translation: [...entry.cam_t_m2c] as Vec3,
    alpha: store.state.alpha,
  });
  return true;
}
