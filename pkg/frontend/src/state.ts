/**
 * Editor state and its pure reducer.
 *
 * Every transition is a pure function of (state, event); replaying a
 * recorded event log therefore reproduces the exact final state, which
 * is what makes sessions auditable and the UI testable without a DOM.
 */

import { Axis, IDENTITY, Mat3, Vec3, axisRotation, multiply } from "./matrix.js";

export interface PoseDraft {
  rotation: Mat3;
  translation: Vec3;
}

export interface JobInfo {
  id: string;
  kind: string;
  status: string;
  detail: string;
}

export interface EditorState {
  sceneId: number | null;
  viewId: number;
  refViewId: number;
  objId: number | null;
  candidate: PoseDraft;
  /** poses committed per object id, all in the reference camera frame */
  posed: Record<number, PoseDraft>;
  alpha: number;
  overlayPending: boolean;
  lastRendered: PoseDraft | null;
  annotationSaved: boolean;
  propagated: boolean;
  job: JobInfo | null;
  message: string | null;
}

export type EditorEvent =
  | { type: "scene-selected"; sceneId: number; refViewId: number }
  | { type: "view-selected"; viewId: number }
  | { type: "object-selected"; objId: number }
  | { type: "nudge"; axis: Axis; mode: "rotate" | "translate"; delta: number }
  | { type: "pose-committed" }
  | { type: "pose-reset" }
  | { type: "opacity-set"; alpha: number }
  | { type: "overlay-requested" }
  | { type: "overlay-rendered"; pose: PoseDraft }
  | { type: "annotation-saved" }
  | { type: "propagate-finished"; jobId: string }
  | { type: "masks-started"; jobId: string }
  | { type: "job-updated"; job: JobInfo }
  | { type: "notice"; message: string };

const DEFAULT_TRANSLATION: Vec3 = [0, 0, 500];

export function initialState(): EditorState {
  return {
    sceneId: null,
    viewId: 0,
    refViewId: 0,
    objId: null,
    candidate: { rotation: IDENTITY, translation: DEFAULT_TRANSLATION },
    posed: {},
    alpha: 0.5,
    overlayPending: false,
    lastRendered: null,
    annotationSaved: false,
    propagated: false,
    job: null,
    message: null,
  };
}

function nudged(pose: PoseDraft, axis: Axis, mode: "rotate" | "translate",
                delta: number): PoseDraft {
  if (mode === "rotate") {
    // compose in the camera frame; elementary rotations only, so the
    // candidate rotation stays orthonormal by construction
    return { rotation: multiply(axisRotation(axis, delta), pose.rotation),
             translation: pose.translation };
  }
  const t: Vec3 = [...pose.translation];
  const index = ({ x: 0, y: 1, z: 2 } as const)[axis];
  t[index] += delta;
  return { rotation: pose.rotation, translation: t };
}

export function reduce(state: EditorState, event: EditorEvent): EditorState {
  switch (event.type) {
    case "scene-selected":
      return { ...initialState(), sceneId: event.sceneId,
               refViewId: event.refViewId, viewId: event.refViewId };
    case "view-selected":
      return { ...state, viewId: event.viewId };
    case "object-selected": {
      const existing = state.posed[event.objId];
      return { ...state, objId: event.objId,
               candidate: existing ?? { rotation: IDENTITY,
                                        translation: DEFAULT_TRANSLATION } };
    }
    case "nudge":
      if (state.objId === null) {
        return state;
      }
      return { ...state,
               candidate: nudged(state.candidate, event.axis, event.mode,
                                 event.delta) };
    case "pose-committed":
      if (state.objId === null) {
        return state;
      }
      return { ...state,
               posed: { ...state.posed, [state.objId]: state.candidate },
               annotationSaved: false };
    case "pose-reset":
      return { ...state, candidate: { rotation: IDENTITY,
                                      translation: DEFAULT_TRANSLATION } };
    case "opacity-set":
      return { ...state, alpha: event.alpha };
    case "overlay-requested":
      return { ...state, overlayPending: true };
    case "overlay-rendered":
      return { ...state, overlayPending: false, lastRendered: event.pose };
    case "annotation-saved":
      return { ...state, annotationSaved: true, propagated: false,
               message: "annotation saved" };
    case "propagate-finished":
      return { ...state, propagated: true,
               message: `poses propagated (${event.jobId})` };
    case "masks-started":
      return { ...state,
               job: { id: event.jobId, kind: "masks", status: "running",
                      detail: "" } };
    case "job-updated":
      return { ...state, job: event.job };
    case "notice":
      return { ...state, message: event.message };
  }
}

/** Saving needs at least one posed object. */
export function canSave(state: EditorState): boolean {
  return state.sceneId !== null && Object.keys(state.posed).length > 0;
}

/** Propagation needs the annotation to be saved first. */
export function canPropagate(state: EditorState): boolean {
  return state.annotationSaved;
}

/** Mask generation needs propagated ground truth. */
export function canGenerateMasks(state: EditorState): boolean {
  return state.propagated;
}

export function replay(events: readonly EditorEvent[]): EditorState {
  return events.reduce(reduce, initialState());
}

/** Dispatching store that records the event log for replay. */
export class Store {
  state: EditorState;
  readonly log: EditorEvent[] = [];

  constructor(initial: EditorState = initialState()) {
    this.state = initial;
  }

  dispatch(event: EditorEvent): void {
    this.log.push(event);
    this.state = reduce(this.state, event);
  }
}
