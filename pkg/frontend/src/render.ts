/** Canvas drawing for trajectory cards. */

import type { TrajectoryCard } from "./model.js";

const W = 220;
const H = 140;
const PAD = 12;

function bounds(points: number[][], extra: number[][]): [number, number, number, number] {
  const all = points.concat(extra);
  let xMin = Infinity, xMax = -Infinity, yMin = Infinity, yMax = -Infinity;
  for (const [x, y] of all) {
    xMin = Math.min(xMin, x);
    xMax = Math.max(xMax, x);
    yMin = Math.min(yMin, y);
    yMax = Math.max(yMax, y);
  }
  const spanX = xMax - xMin || 1;
  const spanY = yMax - yMin || 1;
  return [xMin, spanX, yMin, spanY];
}

export function drawCard(canvas: HTMLCanvasElement, card: TrajectoryCard): void {
  canvas.width = W;
  canvas.height = H;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, W, H);

  const goalPoints: number[][] = [];
  if (card.kind === "path" && Array.isArray(card.goal)) {
    goalPoints.push(card.goal as number[]);
  } else if (card.kind === "timeseries" && typeof card.goal === "number") {
    // horizontal goal line across the whole time axis
    goalPoints.push([card.points[0][0], card.goal]);
    goalPoints.push([card.points[card.points.length - 1][0], card.goal]);
  }
  const [xMin, spanX, yMin, spanY] = bounds(card.points, goalPoints);
  const sx = (x: number) => PAD + ((x - xMin) / spanX) * (W - 2 * PAD);
  const sy = (y: number) => H - PAD - ((y - yMin) / spanY) * (H - 2 * PAD);

  if (card.kind === "timeseries" && typeof card.goal === "number") {
    ctx.strokeStyle = "#2a9d8f";
    ctx.setLineDash([4, 3]);
    ctx.beginPath();
    ctx.moveTo(sx(goalPoints[0][0]), sy(card.goal));
    ctx.lineTo(sx(goalPoints[1][0]), sy(card.goal));
    ctx.stroke();
    ctx.setLineDash([]);
  }

  ctx.strokeStyle = "#264653";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  card.points.forEach(([x, y], i) => {
    if (i === 0) ctx.moveTo(sx(x), sy(y));
    else ctx.lineTo(sx(x), sy(y));
  });
  ctx.stroke();

  // start marker
  const [x0, y0] = card.points[0];
  ctx.fillStyle = "#e76f51";
  ctx.beginPath();
  ctx.arc(sx(x0), sy(y0), 3.5, 0, Math.PI * 2);
  ctx.fill();

  if (card.kind === "path" && Array.isArray(card.goal)) {
    const [gx, gy] = card.goal as number[];
    ctx.strokeStyle = "#2a9d8f";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(sx(gx), sy(gy), 5, 0, Math.PI * 2);
    ctx.stroke();
  }
}
