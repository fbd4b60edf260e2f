/** Pure draft state for the ranking session: an ordered id list
 * (worst first, best last) plus the pairwise-comparison sorter that can
 * rebuild that order from yes/no judgments. No DOM access here so the
 * whole module is unit-testable in node.
 */
export function freshDraft(session) {
    // list mode starts complete: every card is placed, just maybe mis-ordered
    return { order: session.trajectories.map((t) => t.id), complete: true };
}
/** Move the item at `from` so it lands at index `to`; everything else
 * keeps its relative order. Out-of-range indices are clamped. */
export function reorder(draft, from, to) {
    const order = draft.order.slice();
    const n = order.length;
    const i = Math.max(0, Math.min(n - 1, from));
    const j = Math.max(0, Math.min(n - 1, to));
    const [moved] = order.splice(i, 1);
    order.splice(j, 0, moved);
    return { order, complete: draft.complete };
}
/** True when the draft places every session id exactly once. */
export function isPermutation(draft, session) {
    const want = new Set(session.trajectories.map((t) => t.id));
    if (draft.order.length !== want.size)
        return false;
    const seen = new Set();
    for (const id of draft.order) {
        if (!want.has(id) || seen.has(id))
            return false;
        seen.add(id);
    }
    return true;
}
export function canSubmit(draft, session) {
    return draft.complete && isPermutation(draft, session);
}
/** Binary insertion sort driven by pairwise judgments.
 *
 * Items are inserted one at a time into a sorted prefix (worst -> best);
 * each judgment halves the insertion window, so a full order costs
 * O(n log n) comparisons and n = 3 needs at most 3.
 */
export class PairwiseSorter {
    constructor(ids) {
        this.current = null;
        this.lo = 0;
        this.hi = 0;
        this.sorted = ids.slice(0, 1);
        this.pending = ids.slice(1);
        this.advance();
    }
    advance() {
        this.current = this.pending.length ? this.pending[0] : null;
        if (this.current !== null) {
            this.pending = this.pending.slice(1);
            this.lo = 0;
            this.hi = this.sorted.length;
        }
    }
    /** Next pair to show, or null when the order is complete. */
    next() {
        if (this.current === null)
            return null;
        const mid = (this.lo + this.hi) >> 1;
        return { left: this.current, right: this.sorted[mid] };
    }
    /** Answer for the pair from next(): is `left` better than `right`? */
    answer(leftIsBetter) {
        if (this.current === null)
            return;
        const mid = (this.lo + this.hi) >> 1;
        if (leftIsBetter) {
            this.lo = mid + 1; // better sorts later (best last)
        }
        else {
            this.hi = mid;
        }
        if (this.lo >= this.hi) {
            this.sorted.splice(this.lo, 0, this.current);
            this.advance();
        }
    }
    done() {
        return this.current === null;
    }
    /** Worst -> best order; only meaningful once done(). */
    result() {
        return this.sorted.slice();
    }
}
/** Order ids by repeatedly asking `prefers(a, b) = a is better than b`.
 * Test helper mirroring what the UI does with a human in the loop. */
export function sortWithJudge(ids, prefers) {
    const sorter = new PairwiseSorter(ids);
    let comparisons = 0;
    for (let pair = sorter.next(); pair !== null; pair = sorter.next()) {
        comparisons += 1;
        sorter.answer(prefers(pair.left, pair.right));
    }
    return { order: sorter.result(), comparisons };
}
export function serializeDraft(draft, hash) {
    return JSON.stringify({ dataset_hash: hash, order: draft.order });
}
/** Restore a stored draft; null when absent, corrupt, or for another dataset. */
export function restoreDraft(raw, session) {
    if (!raw)
        return null;
    let stored;
    try {
        stored = JSON.parse(raw);
    }
    catch {
        return null;
    }
    if (stored.dataset_hash !== session.dataset_hash)
        return null;
    const draft = { order: stored.order ?? [], complete: true };
    return isPermutation(draft, session) ? draft : null;
}
