// Single UI state store.  All updates flow through here so panels render a
// consistent view; the tool/method pairing is enforced at this level.

import type { RegionShape } from "./geometry.js";

export type Method = "gopt" | "zopt";
export type Tool = "rect" | "polygon";

export interface LossPoint {
    iteration: number;
    values: Record<string, number>;
}

export interface StorageLike {
    getItem(key: string): string | null;
    setItem(key: string, value: string): void;
}

const STORAGE_KEY = "microinpaint-ui";

export class UiStore {
    sessionId: string | null = null;
    imageKind: string | null = null;
    kindOverride: string | null = null;
    method: Method = "gopt";
    regionIndex: number | null = null;
    region: RegionShape | null = null;
    jobId: string | null = null;
    jobState: string | null = null;
    jobError: string | null = null;
    bundleId: string | null = null;
    resultId: string | null = null;
    previewUrl: string | null = null;
    previewUpdatedAt = 0;
    losses: LossPoint[] = [];
    inlineError: string | null = null;

    private listeners: (() => void)[] = [];

    constructor(private storage: StorageLike | null = null) {
        this.restore();
    }

    subscribe(fn: () => void): () => void {
        this.listeners.push(fn);
        return () => { this.listeners = this.listeners.filter(l => l !== fn); };
    }

    private emit(): void {
        for (const fn of this.listeners) fn();
    }

    /** The drawing tool is determined by the method: rectangles train the
     *  region-specific generator, polygons go to seed optimisation. */
    get tool(): Tool {
        return this.method === "gopt" ? "rect" : "polygon";
    }

    get jobRunning(): boolean {
        return this.jobState === "queued" || this.jobState === "running"
            || this.jobState === "cancelling";
    }

    setMethod(method: Method): void {
        if (this.jobRunning) {
            this.inlineError = "stop the running job before switching methods";
            this.emit();
            return;
        }
        this.method = method;
        this.region = null;
        this.regionIndex = null;
        this.persist();
        this.emit();
    }

    setKindOverride(kind: string | null): void {
        this.kindOverride = kind;
        this.persist();
        this.emit();
    }

    setSession(sessionId: string, kind: string): void {
        this.sessionId = sessionId;
        this.imageKind = kind;
        this.region = null;
        this.regionIndex = null;
        this.jobId = this.jobState = this.bundleId = this.resultId = null;
        this.losses = [];
        this.previewUrl = null;
        this.emit();
    }

    setRegion(region: RegionShape, index: number): void {
        this.region = region;
        this.regionIndex = index;
        this.inlineError = null;
        this.emit();
    }

    setInlineError(message: string | null): void {
        this.inlineError = message;
        this.emit();
    }

    jobStarted(jobId: string): void {
        this.jobId = jobId;
        this.jobState = "running";
        this.jobError = null;
        this.losses = [];
        this.emit();
    }

    recordLosses(iteration: number, values: Record<string, number>): void {
        const last = this.losses[this.losses.length - 1];
        if (last && last.iteration >= iteration) return; // replay protection
        this.losses.push({ iteration, values });
        this.emit();
    }

    setPreview(url: string, now: number): void {
        this.previewUrl = url;
        this.previewUpdatedAt = now;
        this.emit();
    }

    jobEnded(state: string, bundleId: string | null, resultId: string | null, error?: string): void {
        this.jobState = state;
        this.bundleId = bundleId ?? this.bundleId;
        this.resultId = resultId ?? this.resultId;
        this.jobError = error ?? null;
        this.emit();
    }

    setJobState(state: string): void {
        this.jobState = state;
        this.emit();
    }

    setResult(resultId: string): void {
        this.resultId = resultId;
        this.emit();
    }

    private persist(): void {
        if (!this.storage) return;
        this.storage.setItem(STORAGE_KEY, JSON.stringify({
            method: this.method,
            kindOverride: this.kindOverride,
        }));
    }

    private restore(): void {
        if (!this.storage) return;
        const raw = this.storage.getItem(STORAGE_KEY);
        if (!raw) return;
        try {
            const saved = JSON.parse(raw);
            if (saved.method === "gopt" || saved.method === "zopt") this.method = saved.method;
            this.kindOverride = saved.kindOverride ?? null;
        } catch {
            // stale storage is not an error
        }
    }
}
