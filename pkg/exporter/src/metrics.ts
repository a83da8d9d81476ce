/**
 * Mask and grid metrics, definition-matched to the retrieval engine's
 * evaluation module (shared test vectors in ../fixtures guard the contract
 * bit for bit at float32).
 */

export class ShapeMismatchError extends Error {}

/** Foreground IoU over binarized grids; both empty counts as full agreement. */
export function miou(pred: ArrayLike<number>, gt: ArrayLike<number>): number {
  if (pred.length !== gt.length) {
    throw new ShapeMismatchError(`mask sizes differ: ${pred.length} vs ${gt.length}`);
  }
  let intersection = 0;
  let union = 0;
  for (let i = 0; i < pred.length; i++) {
    const p = pred[i] > 0.5 ? 1 : 0;
    const g = gt[i] > 0.5 ? 1 : 0;
    if (p === 1 && g === 1) intersection++;
    if (p === 1 || g === 1) union++;
  }
  return union === 0 ? 1.0 : intersection / union;
}

export function mse(pred: ArrayLike<number>, gt: ArrayLike<number>): number {
  if (pred.length !== gt.length) {
    throw new ShapeMismatchError(`grid sizes differ: ${pred.length} vs ${gt.length}`);
  }
  let total = 0;
  for (let i = 0; i < pred.length; i++) {
    const diff = pred[i] - gt[i];
    total += diff * diff;
  }
  return total / pred.length;
}
