// Live training panel: subscribes to the job event stream, feeds loss
// sparklines and preview refreshes into the store, and exposes Stop.
// Dropped streams reconnect and resume after the last seen event id.

import { ApiClient, JobEvent } from "./api.js";
import { UiStore } from "./store.js";

export interface Clock {
    now(): number;
}

const systemClock: Clock = { now: () => Date.now() };

export class TrainingPanel {
    private lastEventId = -1;
    private handle: { cancel(): void } | null = null;
    private stopped = false;

    constructor(
        private api: ApiClient,
        private store: UiStore,
        private clock: Clock = systemClock,
    ) {}

    async start(config: Record<string, unknown>, rngSeed = 0): Promise<string> {
        const { sessionId, method, regionIndex, bundleId } = this.store;
        if (!sessionId) throw new Error("no image loaded");
        const payload: Record<string, unknown> = {
            method: method === "gopt" ? "gopt" : "zopt_train",
            config,
            rng_seed: rngSeed,
        };
        if (regionIndex !== null) payload.region_index = regionIndex;
        if (method === "zopt" && bundleId) {
            payload.method = "zopt_optimize";
            payload.bundle_id = bundleId;
        }
        const { job_id } = await this.api.startJob(sessionId, payload);
        this.store.jobStarted(job_id);
        this.lastEventId = -1;
        this.stopped = false;
        this.subscribe(job_id);
        return job_id;
    }

    /** Attach to an already-running job (e.g. after a page reload). */
    attach(jobId: string): void {
        this.store.jobStarted(jobId);
        this.lastEventId = -1;
        this.stopped = false;
        this.subscribe(jobId);
    }

    private subscribe(jobId: string): void {
        this.handle = this.api.streamEvents(
            jobId,
            this.lastEventId,
            (id, event) => this.onEvent(jobId, id, event),
            completed => {
                if (!completed && !this.stopped) this.subscribe(jobId); // auto-reconnect
            },
        );
    }

    private onEvent(jobId: string, id: number, event: JobEvent): void {
        if (id <= this.lastEventId) return; // replayed event after reconnect
        this.lastEventId = id;
        if (event.type === "progress") {
            const values: Record<string, number> = {};
            for (const key of ["l_d", "l_g", "l_cl", "mse", "kl"] as const) {
                const v = event[key];
                if (typeof v === "number") values[key] = v;
            }
            this.store.recordLosses(event.iteration ?? 0, values);
            if (event.preview) {
                this.store.setPreview(this.api.previewUrl(jobId), this.clock.now());
            }
        } else if (event.type === "end") {
            this.stopped = true;
            this.store.jobEnded(
                event.state ?? "done",
                event.bundle_id ?? null,
                event.result_id ?? null,
                event.error,
            );
        }
    }

    /** The user judges convergence; Stop cancels and the job lands in a
     *  terminal state with whatever the model has learned so far. */
    async stop(): Promise<void> {
        const jobId = this.store.jobId;
        if (!jobId) return;
        this.store.setJobState("cancelling");
        await this.api.cancelJob(jobId);
    }

    detach(): void {
        this.stopped = true;
        this.handle?.cancel();
    }
}
