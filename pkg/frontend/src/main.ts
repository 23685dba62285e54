// Browser entry point: wires the store, drawing canvas and panels to the DOM.
// Workflow: load image -> pick type and method -> draw the occlusion ->
// train and watch previews -> stop at convergence -> resample -> save.

import { ApiClient } from "./api.js";
import { RegionDrawer } from "./canvas.js";
import { ResamplePanel } from "./panels.js";
import { sparklinePath } from "./sparkline.js";
import { UiStore } from "./store.js";
import { TrainingPanel } from "./training.js";

const api = new ApiClient("");
const store = new UiStore(window.localStorage);
const training = new TrainingPanel(api, store);
const resamplePanel = new ResamplePanel(api, store);

const $ = <T extends HTMLElement>(id: string): T => {
    const el = document.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el as T;
};

let drawer: RegionDrawer | null = null;
let imageBitmap: ImageBitmap | null = null;

function canvasPoint(ev: MouseEvent): [number, number] {
    const canvas = $("image-canvas") as unknown as HTMLCanvasElement;
    const rect = canvas.getBoundingClientRect();
    return [
        ((ev.clientX - rect.left) / rect.width) * canvas.width,
        ((ev.clientY - rect.top) / rect.height) * canvas.height,
    ];
}

function redraw(): void {
    const canvas = $("image-canvas") as unknown as HTMLCanvasElement;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (imageBitmap) ctx.drawImage(imageBitmap, 0, 0);
    ctx.strokeStyle = "#ff5533";
    ctx.lineWidth = 2;
    const region = store.region;
    if (region?.shape === "rect") {
        ctx.strokeRect(region.x, region.y, region.w, region.h);
    } else if (region?.shape === "polygon") {
        ctx.beginPath();
        region.vertices.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
        ctx.closePath();
        ctx.stroke();
    }
    if (drawer?.currentRect) {
        const r = drawer.currentRect;
        ctx.setLineDash([4, 4]);
        ctx.strokeRect(r.x, r.y, r.w, r.h);
        ctx.setLineDash([]);
        $("snap-label").textContent = `${r.w}×${r.h}`;
    }
    if (drawer && drawer.vertices.length) {
        ctx.fillStyle = "#ff5533";
        for (const [x, y] of drawer.vertices) ctx.fillRect(x - 2, y - 2, 4, 4);
    }
    // the preview overlay is the service's latest inpaint attempt, drawn
    // on top of the original in place
    const preview = $("preview-overlay") as unknown as HTMLImageElement;
    preview.style.display = store.previewUrl ? "block" : "none";
    if (store.previewUrl && preview.src !== store.previewUrl) preview.src = store.previewUrl;
}

function render(): void {
    $("method-gopt").toggleAttribute("data-active", store.method === "gopt");
    $("method-zopt").toggleAttribute("data-active", store.method === "zopt");
    $("tool-label").textContent = store.tool === "rect" ? "rectangle" : "polygon";
    $("job-state").textContent = store.jobState ?? "idle";
    $("inline-error").textContent = store.inlineError ?? "";
    ($("btn-stop") as HTMLButtonElement).disabled = !store.jobRunning;
    ($("btn-train") as HTMLButtonElement).disabled = store.jobRunning || store.regionIndex === null;
    ($("btn-generate") as HTMLButtonElement).disabled = !store.bundleId || store.jobRunning;
    ($("btn-save") as HTMLButtonElement).disabled = !store.resultId;
    const keys = store.method === "gopt" ? ["l_d", "l_g", "l_cl"] : ["l_d", "l_g", "mse", "kl"];
    const svg = $("sparklines");
    svg.innerHTML = "";
    keys.forEach((key, i) => {
        const path = document.createElementNS("http://www.w3.org/2000/svg", "path");
        path.setAttribute("d", sparklinePath(store.losses, key, 220, 36));
        path.setAttribute("fill", "none");
        path.setAttribute("stroke", ["#3366cc", "#cc6633", "#33aa55", "#aa33aa"][i]);
        path.setAttribute("transform", `translate(0, ${i * 40})`);
        svg.appendChild(path);
    });
    redraw();
}

async function loadFile(file: File): Promise<void> {
    const kindHint = store.kindOverride ?? undefined;
    const info = await api.createSession(file, kindHint);
    store.setSession(info.session_id, info.kind);
    imageBitmap = await createImageBitmap(file);
    const canvas = $("image-canvas") as unknown as HTMLCanvasElement;
    canvas.width = info.width;
    canvas.height = info.height;
    drawer = new RegionDrawer(store, info.width, info.height);
    $("image-kind").textContent = info.kind + (info.n_phases ? ` (${info.n_phases} phases)` : "");
    render();
}

async function commitRegion(shape: Parameters<ApiClient["setRegion"]>[2]): Promise<void> {
    if (!store.sessionId) return;
    try {
        const { region_index } = await api.setRegion(store.sessionId, store.method, shape);
        store.setRegion(shape, region_index);
    } catch (err) {
        store.setInlineError(String(err));
    }
}

function advancedConfig(): Record<string, unknown> {
    const text = ($("advanced-config") as unknown as HTMLTextAreaElement).value.trim();
    if (!text) return {};
    try {
        return JSON.parse(text);
    } catch {
        store.setInlineError("advanced config must be JSON");
        return {};
    }
}

export function bootstrap(): void {
    store.subscribe(render);
    $("file-input").addEventListener("change", ev => {
        const input = ev.target as HTMLInputElement;
        if (input.files?.[0]) void loadFile(input.files[0]);
    });
    $("method-gopt").addEventListener("click", () => store.setMethod("gopt"));
    $("method-zopt").addEventListener("click", () => store.setMethod("zopt"));
    $("kind-select").addEventListener("change", ev => {
        const value = (ev.target as HTMLSelectElement).value;
        store.setKindOverride(value === "auto" ? null : value);
    });

    const canvas = $("image-canvas");
    canvas.addEventListener("mousedown", ev => {
        drawer?.pointerDown(...canvasPoint(ev));
    });
    canvas.addEventListener("mousemove", ev => {
        if (drawer?.pointerMove(...canvasPoint(ev))) redraw();
    });
    canvas.addEventListener("mouseup", ev => {
        const rect = drawer?.pointerUp(...canvasPoint(ev));
        if (rect) void commitRegion(rect);
    });
    canvas.addEventListener("click", ev => {
        const result = drawer?.click(...canvasPoint(ev));
        if (result?.closed && result.shape) void commitRegion(result.shape);
        redraw();
    });

    $("btn-train").addEventListener("click", () => {
        void training.start(advancedConfig()).catch(err => store.setInlineError(String(err)));
    });
    $("btn-stop").addEventListener("click", () => void training.stop());
    $("btn-generate").addEventListener("click", () => {
        const seed = Math.floor(Math.random() * 1e9);
        void resamplePanel.generate(seed)
            .then(resultId => {
                if (store.sessionId) {
                    store.setPreview(
                        `/sessions/${store.sessionId}/export?result_id=${resultId}`, Date.now(),
                    );
                }
            })
            .catch(err => store.setInlineError(String(err)));
    });
    $("btn-save").addEventListener("click", () => void resamplePanel.saveToFile());
    render();
}

if (typeof document !== "undefined" && document.getElementById("image-canvas")) {
    bootstrap();
}
