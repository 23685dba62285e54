// Typed client for the inpainting service.  All displayed pixels come from
// the service; the client never synthesises or edits image data itself.

import type { RegionShape } from "./geometry.js";

export interface SessionInfo {
    v: number;
    session_id: string;
    kind: string;
    n_phases: number | null;
    width: number;
    height: number;
    source_hash: string;
}

export interface JobEvent {
    v: number;
    type: "progress" | "end";
    iteration?: number;
    l_d?: number;
    l_g?: number;
    l_cl?: number;
    mse?: number;
    kl?: number;
    best_mse?: number;
    preview?: boolean;
    state?: string;
    error?: string;
    bundle_id?: string | null;
    result_id?: string | null;
}

export interface JobStatus {
    job_id: string;
    state: string;
    error: string | null;
    bundle_id: string | null;
    result_id: string | null;
    last_iteration: number;
}

export interface EventHandle {
    cancel(): void;
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
    constructor(
        private baseUrl: string,
        private fetchFn: FetchFn = (u, i) => fetch(u, i),
    ) {}

    private async json<T>(url: string, init?: RequestInit): Promise<T> {
        const res = await this.fetchFn(this.baseUrl + url, init);
        if (!res.ok) {
            const body = await res.text();
            let detail = body;
            try { detail = JSON.parse(body).detail ?? body; } catch { /* plain text */ }
            throw new Error(`${res.status}: ${detail}`);
        }
        return res.json() as Promise<T>;
    }

    createSession(image: Blob, kindHint?: string): Promise<SessionInfo> {
        const qs = kindHint ? `?kind_hint=${encodeURIComponent(kindHint)}` : "";
        return this.json<SessionInfo>(`/sessions${qs}`, { method: "POST", body: image });
    }

    setRegion(sessionId: string, method: "gopt" | "zopt", region: RegionShape):
        Promise<{ region_index: number }> {
        return this.json(`/sessions/${sessionId}/region`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ method, region }),
        });
    }

    startJob(sessionId: string, payload: Record<string, unknown>): Promise<{ job_id: string }> {
        return this.json(`/sessions/${sessionId}/jobs`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(payload),
        });
    }

    jobStatus(jobId: string): Promise<JobStatus> {
        return this.json(`/jobs/${jobId}`);
    }

    cancelJob(jobId: string): Promise<{ state: string }> {
        return this.json(`/jobs/${jobId}/cancel`, { method: "POST" });
    }

    resample(sessionId: string, bundleId: string, rngSeed: number):
        Promise<{ result_id: string }> {
        return this.json(`/sessions/${sessionId}/resample`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ bundle_id: bundleId, rng_seed: rngSeed }),
        });
    }

    /** Raw PNG bytes of a stored result, exactly as the service exports them. */
    async exportResult(sessionId: string, resultId: string): Promise<ArrayBuffer> {
        const res = await this.fetchFn(
            `${this.baseUrl}/sessions/${sessionId}/export?result_id=${resultId}`,
        );
        if (!res.ok) throw new Error(`export failed: ${res.status}`);
        return res.arrayBuffer();
    }

    previewUrl(jobId: string): string {
        return `${this.baseUrl}/jobs/${jobId}/preview?t=${Date.now()}`;
    }

    /** Subscribe to a job's event stream; resumes after `after` when given.
     *  Returns a handle whose cancel() stops the subscription. */
    streamEvents(
        jobId: string,
        after: number,
        onEvent: (id: number, event: JobEvent) => void,
        onClose: (completed: boolean) => void,
    ): EventHandle {
        let cancelled = false;
        const run = async () => {
            let completed = false;
            try {
                const res = await this.fetchFn(`${this.baseUrl}/jobs/${jobId}/events?after=${after}`);
                if (!res.ok || res.body === null) throw new Error(`stream failed: ${res.status}`);
                const reader = res.body.getReader();
                const decoder = new TextDecoder();
                let buffer = "";
                for (;;) {
                    const { done, value } = await reader.read();
                    if (cancelled) { reader.cancel(); break; }
                    if (done) break;
                    buffer += decoder.decode(value, { stream: true });
                    let sep;
                    while ((sep = buffer.indexOf("\n\n")) >= 0) {
                        const chunk = buffer.slice(0, sep);
                        buffer = buffer.slice(sep + 2);
                        const idLine = chunk.split("\n").find(l => l.startsWith("id: "));
                        const dataLine = chunk.split("\n").find(l => l.startsWith("data: "));
                        if (!dataLine) continue;
                        const id = idLine ? parseInt(idLine.slice(4), 10) : -1;
                        const event = JSON.parse(dataLine.slice(6)) as JobEvent;
                        onEvent(id, event);
                        if (event.type === "end") completed = true;
                    }
                }
            } catch {
                completed = false;
            }
            if (!cancelled) onClose(completed);
        };
        void run();
        return { cancel: () => { cancelled = true; } };
    }
}
