/** Thin wrappers for the two ranking endpoints. */

import type { SessionView } from "./model.js";

export interface SubmitOutcome {
  status: number;
  ok: boolean;
  error?: string;
  path?: string;
}

export async function loadSession(base = ""): Promise<SessionView> {
  const resp = await fetch(`${base}/api/session`);
  if (!resp.ok) {
    throw new Error(`session endpoint returned ${resp.status}`);
  }
  return (await resp.json()) as SessionView;
}

export async function submitRanking(
  hash: string,
  order: number[],
  base = "",
): Promise<SubmitOutcome> {
  const resp = await fetch(`${base}/api/ranking`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ dataset_hash: hash, order }),
  });
  const body = (await resp.json().catch(() => ({}))) as {
    error?: string;
    path?: string;
  };
  return { status: resp.status, ok: resp.ok, error: body.error, path: body.path };
}
