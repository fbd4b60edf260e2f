/** Thin wrappers for the two ranking endpoints. */
export async function loadSession(base = "") {
    const resp = await fetch(`${base}/api/session`);
    if (!resp.ok) {
        throw new Error(`session endpoint returned ${resp.status}`);
    }
    return (await resp.json());
}
export async function submitRanking(hash, order, base = "") {
    const resp = await fetch(`${base}/api/ranking`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ dataset_hash: hash, order }),
    });
    const body = (await resp.json().catch(() => ({})));
    return { status: resp.status, ok: resp.ok, error: body.error, path: body.path };
}
