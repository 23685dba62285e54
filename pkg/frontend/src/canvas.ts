// Region drawing controller.  Pointer coordinates arrive in image space;
// the active tool follows the selected method (rect for gopt, polygon for
// zopt).  Rectangles snap live to the 8-pixel grid; polygons close on a
// click near their first vertex and reject self-intersections inline.

import { PolygonShape, RectShape, RegionShape, closesPolygon, polygonIsSimple, snapRect } from "./geometry.js";
import { UiStore } from "./store.js";

export class RegionDrawer {
    private dragStart: [number, number] | null = null;
    currentRect: RectShape | null = null;
    vertices: [number, number][] = [];

    constructor(
        private store: UiStore,
        private imageWidth: number,
        private imageHeight: number,
    ) {}

    reset(): void {
        this.dragStart = null;
        this.currentRect = null;
        this.vertices = [];
    }

    pointerDown(x: number, y: number): void {
        if (this.store.tool !== "rect") return;
        this.dragStart = [x, y];
        this.currentRect = null;
    }

    /** Live feedback while dragging: the rectangle shown is already snapped. */
    pointerMove(x: number, y: number): RectShape | null {
        if (this.store.tool !== "rect" || !this.dragStart) return null;
        this.currentRect = snapRect(
            this.dragStart[0], this.dragStart[1], x, y, this.imageWidth, this.imageHeight,
        );
        return this.currentRect;
    }

    pointerUp(x: number, y: number): RectShape | null {
        if (this.store.tool !== "rect" || !this.dragStart) return null;
        const rect = snapRect(
            this.dragStart[0], this.dragStart[1], x, y, this.imageWidth, this.imageHeight,
        );
        this.dragStart = null;
        this.currentRect = rect;
        return rect;
    }

    /** Polygon tool: add a vertex, or close the shape on the first vertex. */
    click(x: number, y: number): { closed: boolean; shape?: PolygonShape } {
        if (this.store.tool !== "polygon") return { closed: false };
        if (closesPolygon(this.vertices, x, y)) {
            if (!polygonIsSimple(this.vertices)) {
                this.store.setInlineError("polygon edges cross; adjust the outline");
                return { closed: false };
            }
            const shape: PolygonShape = { shape: "polygon", vertices: this.vertices.slice() };
            this.vertices = [];
            this.store.setInlineError(null);
            return { closed: true, shape };
        }
        const next: [number, number][] = [...this.vertices, [Math.round(x), Math.round(y)]];
        if (next.length >= 3 && !polygonIsSimple(next)) {
            this.store.setInlineError("polygon edges cross; adjust the outline");
            return { closed: false };
        }
        this.vertices = next;
        this.store.setInlineError(null);
        return { closed: false };
    }
}

export const regionToJson = (shape: RegionShape): RegionShape => shape;
