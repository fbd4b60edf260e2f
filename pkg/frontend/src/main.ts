/** Ranking session UI: one card per trajectory, ordered worst (top) to
 * best (bottom). Drag a card, or use its arrow buttons, to move it;
 * pairwise mode rebuilds the order from side-by-side judgments. The draft
 * survives page reloads in localStorage until a submission succeeds.
 */

import { loadSession, submitRanking } from "./api.js";
import {
  canSubmit,
  freshDraft,
  PairwiseSorter,
  RankingDraft,
  reorder,
  restoreDraft,
  serializeDraft,
  SessionView,
} from "./model.js";
import { drawCard } from "./render.js";

const STORAGE_KEY = "trofi-ranking-draft";

let session: SessionView | null = null;
let draft: RankingDraft = { order: [], complete: true };
let sorter: PairwiseSorter | null = null;
let dragFrom: number | null = null;

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function banner(text: string, kind: "error" | "ok" | "info"): void {
  const el = $("banner");
  el.textContent = text;
  el.className = kind;
  el.style.display = text ? "block" : "none";
}

function persist(): void {
  if (session) {
    localStorage.setItem(STORAGE_KEY, serializeDraft(draft, session.dataset_hash));
  }
}

function cardFor(id: number): HTMLElement {
  if (!session) throw new Error("no session");
  const info = session.trajectories.find((t) => t.id === id);
  if (!info) throw new Error(`unknown trajectory ${id}`);
  const li = document.createElement("li");
  li.className = "card";
  li.draggable = true;
  li.dataset.id = String(id);

  const canvas = document.createElement("canvas");
  drawCard(canvas, info);
  li.appendChild(canvas);

  const label = document.createElement("div");
  label.className = "label";
  label.textContent = `episode ${id} - ${info.length} steps`;
  li.appendChild(label);

  const controls = document.createElement("div");
  controls.className = "controls";
  for (const [text, delta] of [["▲ worse", -1], ["▼ better", 1]] as const) {
    const btn = document.createElement("button");
    btn.textContent = text;
    btn.addEventListener("click", () => {
      const from = draft.order.indexOf(id);
      draft = reorder(draft, from, from + delta);
      persist();
      renderList();
    });
    controls.appendChild(btn);
  }
  li.appendChild(controls);

  li.addEventListener("dragstart", () => {
    dragFrom = draft.order.indexOf(id);
  });
  li.addEventListener("dragover", (ev) => ev.preventDefault());
  li.addEventListener("drop", (ev) => {
    ev.preventDefault();
    if (dragFrom === null) return;
    draft = reorder(draft, dragFrom, draft.order.indexOf(id));
    dragFrom = null;
    persist();
    renderList();
  });
  return li;
}

function renderList(): void {
  if (!session) return;
  const list = $("cards");
  list.textContent = "";
  draft.order.forEach((id) => list.appendChild(cardFor(id)));
  const submit = $("submit") as HTMLButtonElement;
  submit.disabled = !canSubmit(draft, session);
  $("pairwise-view").style.display = "none";
  $("list-view").style.display = "block";
}

function renderPairwise(): void {
  if (!session || !sorter) return;
  $("list-view").style.display = "none";
  const view = $("pairwise-view");
  view.style.display = "block";
  const pair = sorter.next();
  if (pair === null) {
    draft = { order: sorter.result(), complete: true };
    sorter = null;
    persist();
    banner("pairwise ordering complete - review and submit", "info");
    renderList();
    return;
  }
  const stage = $("pair-stage");
  stage.textContent = "";
  for (const [id, isLeft] of [[pair.left, true], [pair.right, false]] as const) {
    const info = session.trajectories.find((t) => t.id === id);
    if (!info) continue;
    const cell = document.createElement("div");
    cell.className = "pair-cell";
    const canvas = document.createElement("canvas");
    drawCard(canvas, info);
    cell.appendChild(canvas);
    const btn = document.createElement("button");
    btn.textContent = `episode ${id} is better`;
    btn.addEventListener("click", () => {
      sorter?.answer(isLeft);
      renderPairwise();
    });
    cell.appendChild(btn);
    stage.appendChild(cell);
  }
}

async function submit(): Promise<void> {
  if (!session) return;
  const outcome = await submitRanking(session.dataset_hash, draft.order);
  if (outcome.ok) {
    localStorage.removeItem(STORAGE_KEY);
    banner(`saved ranking to ${outcome.path}`, "ok");
    ($("submit") as HTMLButtonElement).disabled = true;
  } else if (outcome.status === 409) {
    banner("a ranking was already submitted for this session", "error");
  } else {
    banner(`rejected (${outcome.status}): ${outcome.error ?? "unknown error"}`, "error");
  }
}

async function boot(): Promise<void> {
  try {
    session = await loadSession();
  } catch (err) {
    banner(`cannot reach the ranking server - is serve-rank running? (${err})`,
           "error");
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.addEventListener("click", () => window.location.reload());
    $("banner").appendChild(retry);
    return;
  }
  $("env-name").textContent =
    `${session.env} - ${session.trajectories.length} trajectories, worst on top`;
  const stored = restoreDraft(localStorage.getItem(STORAGE_KEY), session);
  draft = stored ?? freshDraft(session);
  if (stored) banner("restored your in-progress draft", "info");
  renderList();

  $("submit").addEventListener("click", () => void submit());
  $("pairwise").addEventListener("click", () => {
    sorter = new PairwiseSorter(draft.order);
    renderPairwise();
  });
}

void boot();
