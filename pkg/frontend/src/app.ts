/**
 * DOM wiring for the side-by-side demo. All learning state lives on the
 * server; this file only moves samples in and numbers out.
 */

import { ApiClient } from "./api.js";
import { renderEvent, renderHistogram, renderPanels } from "./bars.js";
import { CAPTURE_SIZE, grabFrame } from "./capture.js";
import { applyPrediction, applyStagedCounts, clearPanels, ClassPanel, makePanels } from "./panels.js";
import { SessionPair } from "./pair.js";

const INFER_INTERVAL_MS = 400; // comfortably above 2 Hz

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export class App {
  private api: ApiClient;
  private pair: SessionPair | null = null;
  private panels: ClassPanel[] = [];
  private inferTarget: "tl" | "cl" = "cl";
  private inferTimer: number | null = null;
  private training = false;
  private video: HTMLVideoElement;
  private droppedImage: HTMLImageElement | null = null;

  constructor(baseUrl: string = "") {
    this.api = new ApiClient(baseUrl);
    this.video = el<HTMLVideoElement>("webcam");
  }

  bind(): void {
    el("create-pair").onclick = () => void this.createPair();
    el("start-webcam").onclick = () => void this.startWebcam();
    el("train-all").onclick = () => void this.train({ scope: "staged_all" });
    el("reset").onclick = () => void this.reset();
    el("infer-toggle").onclick = () => this.toggleInference();
    for (const target of ["tl", "cl"] as const) {
      el(`target-${target}`).onclick = () => this.setTarget(target);
    }
    const dropZone = el("drop-zone");
    dropZone.ondragover = (e) => e.preventDefault();
    dropZone.ondrop = (e) => this.onDrop(e);
    // capture / per-class train buttons are re-rendered with the panels
    el("panels").addEventListener("click", (e) => {
      const target = e.target as HTMLElement;
      const cls = Number(target.dataset.class);
      if (target.classList.contains("capture-btn")) void this.capture(cls);
      if (target.classList.contains("train-one-btn"))
        void this.train({ scope: "staged_class", class: cls });
    });
    this.renderStatus("create a session pair to begin");
  }

  private async createPair(): Promise<void> {
    const classes = Number(el<HTMLInputElement>("classes-input").value) || 4;
    const seed = Number(el<HTMLInputElement>("seed-input").value) || 0;
    try {
      this.pair = await SessionPair.create(this.api, { classes, seed, quota: 10, capacity: 40 });
      this.panels = makePanels(classes);
      this.renderPanels();
      this.renderStatus(`pair ready: TL ${this.pair.tlId.slice(0, 8)}… / CL ${this.pair.clId.slice(0, 8)}…`);
    } catch (err) {
      this.renderStatus(`create failed: ${err}`);
    }
  }

  private async startWebcam(): Promise<void> {
    try {
      const stream = await navigator.mediaDevices.getUserMedia({ video: true });
      this.video.srcObject = stream;
      await this.video.play();
      this.renderStatus("webcam live");
    } catch (err) {
      this.renderStatus(`webcam unavailable (${err}); drop an image instead`);
    }
  }

  private onDrop(e: DragEvent): void {
    e.preventDefault();
    const file = e.dataTransfer?.files?.[0];
    if (!file) return;
    const img = new Image();
    img.onload = () => {
      this.droppedImage = img;
      this.renderStatus(`dropped ${file.name}; capture away`);
    };
    img.src = URL.createObjectURL(file);
  }

  private captureSource(): HTMLVideoElement | HTMLImageElement | null {
    if (this.video.srcObject && this.video.readyState >= 2) return this.video;
    return this.droppedImage;
  }

  private async capture(cls: number): Promise<void> {
    if (!this.pair) return this.renderStatus("no session pair yet");
    const source = this.captureSource();
    if (!source) return this.renderStatus("no webcam or dropped image to capture from");
    try {
      const counts = await this.pair.addSample(cls, { image: grabFrame(source, CAPTURE_SIZE) });
      this.panels = applyStagedCounts(this.panels, counts);
      this.renderPanels();
    } catch (err) {
      this.renderStatus(`capture failed: ${err}`);
    }
  }

  private async train(scope: { scope: "staged_all" } | { scope: "staged_class"; class: number }): Promise<void> {
    if (!this.pair) return this.renderStatus("no session pair yet");
    this.training = true; // inference polling pauses while a train is in flight
    try {
      const { tl, cl } = await this.pair.train(scope);
      this.appendLog(renderEvent("TL", tl));
      this.appendLog(renderEvent("CL", cl));
      el("histogram").innerHTML = renderHistogram(cl.buffer);
      const state = await this.pair.clState();
      this.panels = applyStagedCounts(this.panels, state.staged_counts);
      this.renderPanels();
    } catch (err) {
      this.renderStatus(`train failed: ${err}`);
    } finally {
      this.training = false;
    }
  }

  private async reset(): Promise<void> {
    if (!this.pair) return;
    await this.pair.reset();
    this.panels = clearPanels(this.panels);
    this.renderPanels();
    el("histogram").innerHTML = "";
    this.appendLog("[pair] reset");
  }

  private setTarget(target: "tl" | "cl"): void {
    this.inferTarget = target;
    el("target-tl").classList.toggle("active", target === "tl");
    el("target-cl").classList.toggle("active", target === "cl");
  }

  private toggleInference(): void {
    if (this.inferTimer !== null) {
      window.clearInterval(this.inferTimer);
      this.inferTimer = null;
      el("infer-toggle").textContent = "start inference";
      return;
    }
    this.inferTimer = window.setInterval(() => void this.inferOnce(), INFER_INTERVAL_MS);
    el("infer-toggle").textContent = "stop inference";
  }

  private async inferOnce(): Promise<void> {
    if (!this.pair || this.training) return;
    const source = this.captureSource();
    if (!source) return;
    try {
      const prediction = await this.pair.predict(this.inferTarget, {
        image: grabFrame(source, CAPTURE_SIZE),
      });
      this.panels = applyPrediction(this.panels, prediction.probs);
      this.renderPanels();
    } catch {
      /* transient; next tick retries */
    }
  }

  private renderPanels(): void {
    el("panels").innerHTML = renderPanels(this.panels);
  }

  private renderStatus(message: string): void {
    el("status").textContent = message;
  }

  private appendLog(line: string): void {
    const log = el("event-log");
    const div = document.createElement("div");
    div.textContent = line;
    log.prepend(div);
  }
}
