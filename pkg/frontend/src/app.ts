/**
 * Browser entry point: wires the store, the service client and the
 * overlay queue to a minimal DOM.  All geometry shown on screen is
 * server-rendered; this file only moves state and pixels around.
 */

import { HttpAnnotationService, OverlayRequest } from "./api.js";
import { Axis } from "./matrix.js";
import { Store, canGenerateMasks, canPropagate, canSave } from "./state.js";
import { OverlayQueue } from "./overlayQueue.js";
import { generateMasks, propagateScene, reviewView, saveAnnotation } from "./workflow.js";

const service = new HttpAnnotationService("");
const store = new Store();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const viewImage = el<HTMLImageElement>("view-image");
const sceneList = el<HTMLSelectElement>("scene-list");
const viewList = el<HTMLSelectElement>("view-list");
const objectInput = el<HTMLInputElement>("object-id");
const statusLine = el<HTMLDivElement>("status");
const opacity = el<HTMLInputElement>("opacity");
const layerToggle = el<HTMLSelectElement>("layer");

const queue = new OverlayQueue<{ viewId: number; req: OverlayRequest }, Blob>({
  send: ({ viewId, req }) => {
    store.dispatch({ type: "overlay-requested" });
    return service.renderOverlay(store.state.sceneId ?? 0, viewId, req);
  },
  onResult: ({ req }, blob) => {
    store.dispatch({
      type: "overlay-rendered",
      pose: { rotation: req.rotation, translation: req.translation },
    });
    viewImage.src = URL.createObjectURL(blob);
    render();
  },
  onError: (_req, error) => {
    store.dispatch({ type: "notice", message: String(error) });
    render();
  },
});

function requestCandidateOverlay(): void {
  const s = store.state;
  if (s.sceneId === null || s.objId === null) {
    return;
  }
  queue.request({
    viewId: s.viewId,
    req: { obj_id: s.objId, rotation: s.candidate.rotation,
           translation: s.candidate.translation, alpha: s.alpha },
  });
}

function render(): void {
  const s = store.state;
  statusLine.textContent = s.message ?? (s.overlayPending ? "rendering…" : "");
  el<HTMLButtonElement>("save").disabled = !canSave(s);
  el<HTMLButtonElement>("propagate").disabled = !canPropagate(s);
  el<HTMLButtonElement>("masks").disabled = !canGenerateMasks(s);
  if (s.job) {
    statusLine.textContent = `job ${s.job.id}: ${s.job.status} ${s.job.detail}`;
  }
}

function showPlainView(): void {
  const s = store.state;
  if (s.sceneId !== null) {
    viewImage.src = service.viewUrl(
      s.sceneId, s.viewId, layerToggle.value as "rgb" | "depth_vis");
  }
}

async function loadScenes(): Promise<void> {
  const scenes = await service.listScenes();
  sceneList.innerHTML = "";
  for (const scene of scenes) {
    const option = document.createElement("option");
    option.value = String(scene.scene_id);
    option.textContent =
      `scene ${scene.scene_id} (${scene.view_count} views, ${scene.status})`;
    sceneList.appendChild(option);
  }
  if (scenes.length) {
    selectScene(scenes[0]!.scene_id, scenes[0]!.view_count);
  }
}

function selectScene(sceneId: number, viewCount: number): void {
  store.dispatch({ type: "scene-selected", sceneId, refViewId: 0 });
  viewList.innerHTML = "";
  for (let v = 0; v < viewCount; v++) {
    const option = document.createElement("option");
    option.value = String(v);
    option.textContent = `view ${v}`;
    viewList.appendChild(option);
  }
  showPlainView();
  render();
}

for (const mode of ["rotate", "translate"] as const) {
  for (const axis of ["x", "y", "z"] as const) {
    for (const sign of [1, -1]) {
      const id = `${mode}-${axis}-${sign > 0 ? "plus" : "minus"}`;
      el<HTMLButtonElement>(id).addEventListener("click", () => {
        const delta = sign * (mode === "rotate" ? 5 : 10);
        store.dispatch({ type: "nudge", axis: axis as Axis, mode, delta });
        requestCandidateOverlay();
        render();
      });
    }
  }
}

sceneList.addEventListener("change", () => {
  void loadScenes;
  const id = Number(sceneList.value);
  const label = sceneList.selectedOptions[0]?.textContent ?? "";
  const views = Number(/\((\d+) views/.exec(label)?.[1] ?? 1);
  selectScene(id, views);
});
viewList.addEventListener("change", () => {
  store.dispatch({ type: "view-selected", viewId: Number(viewList.value) });
  showPlainView();
});
layerToggle.addEventListener("change", showPlainView);
objectInput.addEventListener("change", () => {
  store.dispatch({ type: "object-selected", objId: Number(objectInput.value) });
  requestCandidateOverlay();
});
opacity.addEventListener("input", () => {
  store.dispatch({ type: "opacity-set", alpha: Number(opacity.value) });
  requestCandidateOverlay();
});

el<HTMLButtonElement>("commit").addEventListener("click", () => {
  store.dispatch({ type: "pose-committed" });
  render();
});
el<HTMLButtonElement>("save").addEventListener("click", () => {
  void saveAnnotation(store, service).then(render);
});
el<HTMLButtonElement>("propagate").addEventListener("click", () => {
  void propagateScene(store, service).then(render);
});
el<HTMLButtonElement>("masks").addEventListener("click", () => {
  void generateMasks(store, service).then(render);
});
el<HTMLButtonElement>("review").addEventListener("click", () => {
  const viewId = Number(viewList.value);
  void reviewView(store, service, viewId, (v, req) =>
    queue.request({ viewId: v, req })).then(render);
});

void loadScenes();
