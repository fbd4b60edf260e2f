/** Pure draft state for the ranking session: an ordered id list
 * (worst first, best last) plus the pairwise-comparison sorter that can
 * rebuild that order from yes/no judgments. No DOM access here so the
 * whole module is unit-testable in node.
 */

export interface TrajectoryCard {
  id: number;
  kind: "path" | "timeseries";
  points: number[][];
  goal: number | number[];
  length: number;
}

export interface SessionView {
  env: string;
  dataset_hash: string;
  trajectories: TrajectoryCard[];
}

export interface RankingDraft {
  order: number[]; // worst -> best
  complete: boolean;
}

export function freshDraft(session: SessionView): RankingDraft {
  // list mode starts complete: every card is placed, just maybe mis-ordered
  return { order: session.trajectories.map((t) => t.id), complete: true };
}

/** Move the item at `from` so it lands at index `to`; everything else
 * keeps its relative order. Out-of-range indices are clamped. */
export function reorder(draft: RankingDraft, from: number, to: number): RankingDraft {
  const order = draft.order.slice();
  const n = order.length;
  const i = Math.max(0, Math.min(n - 1, from));
  const j = Math.max(0, Math.min(n - 1, to));
  const [moved] = order.splice(i, 1);
  order.splice(j, 0, moved);
  return { order, complete: draft.complete };
}

/** True when the draft places every session id exactly once. */
export function isPermutation(draft: RankingDraft, session: SessionView): boolean {
  const want = new Set(session.trajectories.map((t) => t.id));
  if (draft.order.length !== want.size) return false;
  const seen = new Set<number>();
  for (const id of draft.order) {
    if (!want.has(id) || seen.has(id)) return false;
    seen.add(id);
  }
  return true;
}

export function canSubmit(draft: RankingDraft, session: SessionView): boolean {
  return draft.complete && isPermutation(draft, session);
}

/** One side-by-side comparison: the user answers which trajectory is better. */
export interface Comparison {
  left: number;
  right: number;
}

/** Binary insertion sort driven by pairwise judgments.
 *
 * Items are inserted one at a time into a sorted prefix (worst -> best);
 * each judgment halves the insertion window, so a full order costs
 * O(n log n) comparisons and n = 3 needs at most 3.
 */
export class PairwiseSorter {
  private sorted: number[];
  private pending: number[];
  private current: number | null = null;
  private lo = 0;
  private hi = 0;

  constructor(ids: number[]) {
    this.sorted = ids.slice(0, 1);
    this.pending = ids.slice(1);
    this.advance();
  }

  private advance(): void {
    this.current = this.pending.length ? this.pending[0] : null;
    if (this.current !== null) {
      this.pending = this.pending.slice(1);
      this.lo = 0;
      this.hi = this.sorted.length;
    }
  }

  /** Next pair to show, or null when the order is complete. */
  next(): Comparison | null {
    if (this.current === null) return null;
    const mid = (this.lo + this.hi) >> 1;
    return { left: this.current, right: this.sorted[mid] };
  }

  /** Answer for the pair from next(): is `left` better than `right`? */
  answer(leftIsBetter: boolean): void {
    if (this.current === null) return;
    const mid = (this.lo + this.hi) >> 1;
    if (leftIsBetter) {
      this.lo = mid + 1; // better sorts later (best last)
    } else {
      this.hi = mid;
    }
    if (this.lo >= this.hi) {
      this.sorted.splice(this.lo, 0, this.current);
      this.advance();
    }
  }

  done(): boolean {
    return this.current === null;
  }

  /** Worst -> best order; only meaningful once done(). */
  result(): number[] {
    return this.sorted.slice();
  }
}

/** Order ids by repeatedly asking `prefers(a, b) = a is better than b`.
 * Test helper mirroring what the UI does with a human in the loop. */
export function sortWithJudge(
  ids: number[],
  prefers: (a: number, b: number) => boolean,
): { order: number[]; comparisons: number } {
  const sorter = new PairwiseSorter(ids);
  let comparisons = 0;
  for (let pair = sorter.next(); pair !== null; pair = sorter.next()) {
    comparisons += 1;
    sorter.answer(prefers(pair.left, pair.right));
  }
  return { order: sorter.result(), comparisons };
}

export interface StoredDraft {
  dataset_hash: string;
  order: number[];
}

export function serializeDraft(draft: RankingDraft, hash: string): string {
  return JSON.stringify({ dataset_hash: hash, order: draft.order });
}

/** Restore a stored draft; null when absent, corrupt, or for another dataset. */
export function restoreDraft(
  raw: string | null,
  session: SessionView,
): RankingDraft | null {
  if (!raw) return null;
  let stored: StoredDraft;
  try {
    stored = JSON.parse(raw) as StoredDraft;
  } catch {
    return null;
  }
  if (stored.dataset_hash !== session.dataset_hash) return null;
  const draft = { order: stored.order ?? [], complete: true };
  return isPermutation(draft, session) ? draft : null;
}
