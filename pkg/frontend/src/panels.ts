// Resample-and-save panel: new inpaint instances come from the service and
// Save writes the exported bytes through untouched.

import { ApiClient } from "./api.js";
import { UiStore } from "./store.js";

export class ResamplePanel {
    constructor(private api: ApiClient, private store: UiStore) {}

    /** Ask the service for a fresh instance of the inpainted region. */
    async generate(rngSeed: number): Promise<string> {
        const { sessionId, bundleId } = this.store;
        if (!sessionId || !bundleId) throw new Error("no trained model available");
        const { result_id } = await this.api.resample(sessionId, bundleId, rngSeed);
        this.store.setResult(result_id);
        return result_id;
    }

    /** The saved file is byte-identical to the service export. */
    async saveBytes(): Promise<ArrayBuffer> {
        const { sessionId, resultId } = this.store;
        if (!sessionId || !resultId) throw new Error("nothing to save yet");
        return this.api.exportResult(sessionId, resultId);
    }

    async saveToFile(filename = "inpainted.png"): Promise<void> {
        const bytes = await this.saveBytes();
        const url = URL.createObjectURL(new Blob([bytes], { type: "image/png" }));
        const a = document.createElement("a");
        a.href = url;
        a.download = filename;
        a.click();
        URL.revokeObjectURL(url);
    }
}
