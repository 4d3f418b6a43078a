/**
 * Minimal 3x3 rotation helpers for maintaining the candidate pose.
 *
 * The editor only ever composes elementary axis rotations, so the
 * candidate stays orthonormal by construction; no other geometry is
 * computed client-side (overlays are rendered by the service).
 */

export type Mat3 = [number, number, number, number, number, number, number, number, number];
export type Vec3 = [number, number, number];
export type Axis = "x" | "y" | "z";

export const IDENTITY: Mat3 = [1, 0, 0, 0, 1, 0, 0, 0, 1];

export function axisRotation(axis: Axis, degrees: number): Mat3 {
  const rad = (degrees * Math.PI) / 180;
  const c = Math.cos(rad);
  const s = Math.sin(rad);
  switch (axis) {
    case "x":
      return [1, 0, 0, 0, c, -s, 0, s, c];
    case "y":
      return [c, 0, s, 0, 1, 0, -s, 0, c];
    case "z":
      return [c, -s, 0, s, c, 0, 0, 0, 1];
  }
}

/** Row-major product a @ b. */
export function multiply(a: Mat3, b: Mat3): Mat3 {
  const out = new Array<number>(9) as Mat3;
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      out[3 * i + j] =
        a[3 * i]! * b[j]! + a[3 * i + 1]! * b[3 + j]! + a[3 * i + 2]! * b[6 + j]!;
    }
  }
  return out;
}

/** Largest absolute deviation of R^T R from the identity. */
export function orthonormalityError(r: Mat3): number {
  let worst = 0;
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      let dot = 0;
      for (let k = 0; k < 3; k++) {
        dot += r[3 * k + i]! * r[3 * k + j]!;
      }
      worst = Math.max(worst, Math.abs(dot - (i === j ? 1 : 0)));
    }
  }
  return worst;
}
