// Loss sparklines: scale a loss series into an SVG path string.

import type { LossPoint } from "./store.js";

export function sparklinePath(
    points: LossPoint[], key: string, width: number, height: number,
): string {
    const series = points
        .map(p => ({ x: p.iteration, y: p.values[key] }))
        .filter(p => typeof p.y === "number" && isFinite(p.y));
    if (series.length < 2) return "";
    const xs = series.map(p => p.x);
    const ys = series.map(p => p.y);
    const x0 = Math.min(...xs), x1 = Math.max(...xs);
    const y0 = Math.min(...ys), y1 = Math.max(...ys);
    const sx = (x: number) => x1 === x0 ? 0 : ((x - x0) / (x1 - x0)) * width;
    const sy = (y: number) => y1 === y0 ? height / 2 : height - ((y - y0) / (y1 - y0)) * height;
    return series
        .map((p, i) => `${i === 0 ? "M" : "L"}${sx(p.x).toFixed(1)},${sy(p.y).toFixed(1)}`)
        .join(" ");
}
