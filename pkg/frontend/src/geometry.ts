// Region geometry for the drawing tools: rectangle snapping and polygon
// validation, matching the service's constraints.

export interface RectShape {
    shape: "rect";
    x: number;
    y: number;
    w: number;
    h: number;
}

export interface PolygonShape {
    shape: "polygon";
    vertices: [number, number][];
}

export type RegionShape = RectShape | PolygonShape;

export const snapToMultipleOf8 = (v: number): number => Math.max(8, Math.round(v / 8) * 8);

/** Snap a dragged rectangle to the training grid: extents become multiples
 *  of 8 and the origin stays inside the image. */
export function snapRect(
    x0: number, y0: number, x1: number, y1: number,
    imageWidth: number, imageHeight: number,
): RectShape {
    const x = Math.min(x0, x1);
    const y = Math.min(y0, y1);
    const w = snapToMultipleOf8(Math.abs(x1 - x0));
    const h = snapToMultipleOf8(Math.abs(y1 - y0));
    return {
        shape: "rect",
        x: Math.max(0, Math.min(Math.round(x), imageWidth - w)),
        y: Math.max(0, Math.min(Math.round(y), imageHeight - h)),
        w,
        h,
    };
}

const orient = (a: [number, number], b: [number, number], c: [number, number]): number =>
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);

const onSegment = (a: [number, number], b: [number, number], c: [number, number]): boolean =>
    Math.min(a[0], b[0]) <= c[0] && c[0] <= Math.max(a[0], b[0]) &&
    Math.min(a[1], b[1]) <= c[1] && c[1] <= Math.max(a[1], b[1]);

export function segmentsIntersect(
    p1: [number, number], p2: [number, number],
    p3: [number, number], p4: [number, number],
): boolean {
    const d1 = orient(p3, p4, p1);
    const d2 = orient(p3, p4, p2);
    const d3 = orient(p1, p2, p3);
    const d4 = orient(p1, p2, p4);
    if (((d1 > 0) !== (d2 > 0)) && ((d3 > 0) !== (d4 > 0)) && d1 !== 0 && d2 !== 0 && d3 !== 0 && d4 !== 0) {
        return true;
    }
    if (d1 === 0 && onSegment(p3, p4, p1)) return true;
    if (d2 === 0 && onSegment(p3, p4, p2)) return true;
    if (d3 === 0 && onSegment(p1, p2, p3)) return true;
    if (d4 === 0 && onSegment(p1, p2, p4)) return true;
    return false;
}

/** A polygon is drawable only when no two non-adjacent edges touch. */
export function polygonIsSimple(vertices: [number, number][]): boolean {
    const n = vertices.length;
    if (n < 3) return false;
    const seen = new Set(vertices.map(v => `${v[0]},${v[1]}`));
    if (seen.size !== n) return false;
    for (let i = 0; i < n; i++) {
        for (let j = i + 1; j < n; j++) {
            if (j === i + 1 || (i === 0 && j === n - 1)) continue;
            const e1: [[number, number], [number, number]] = [vertices[i], vertices[(i + 1) % n]];
            const e2: [[number, number], [number, number]] = [vertices[j], vertices[(j + 1) % n]];
            if (segmentsIntersect(e1[0], e1[1], e2[0], e2[1])) return false;
        }
    }
    return true;
}

/** True when a click at (x, y) should close the polygon on its first vertex. */
export const closesPolygon = (
    vertices: [number, number][], x: number, y: number, tolerance = 6,
): boolean =>
    vertices.length >= 3 &&
    Math.hypot(vertices[0][0] - x, vertices[0][1] - y) <= tolerance;
