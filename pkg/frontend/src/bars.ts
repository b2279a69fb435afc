/**
 * Rendering helpers: class panels with confidence bars, event log lines,
 * buffer histogram. All pure string builders so they are testable without
 * a browser.
 */

import { BufferState, TrainEvent } from "./api.js";
import { ClassPanel } from "./panels.js";

export function renderPanels(panels: ClassPanel[]): string {
  return panels
    .map((p) => {
      const pct = p.confidence === null ? 0 : Math.round(p.confidence * 100);
      const conf = p.confidence === null ? "&mdash;" : `${pct}%`;
      return `
      <div class="class-panel${p.selected ? " selected" : ""}" data-class="${p.index}">
        <div class="panel-head">
          <span class="panel-name">${p.name}</span>
          <span class="panel-staged">${p.staged} staged</span>
        </div>
        <button class="capture-btn" data-class="${p.index}">capture</button>
        <button class="train-one-btn" data-class="${p.index}">train this class</button>
        <div class="conf-bar"><div class="conf-fill" style="width:${pct}%"></div></div>
        <div class="conf-label">${conf}</div>
      </div>`;
    })
    .join("");
}

export function renderEvent(which: string, event: TrainEvent): string {
  const loss = event.final_loss === null ? "-" : event.final_loss.toFixed(4);
  const buffer =
    event.buffer_occupancy === null ? "" : `, buffer ${event.buffer_occupancy}`;
  return `[${which}] ${event.tag}: ${event.samples_seen} samples, ` +
    `${event.epochs_run} epochs, loss ${loss}${buffer} (${event.duration_ms.toFixed(0)} ms)`;
}

export function renderHistogram(buffer: BufferState | undefined): string {
  if (!buffer) return "";
  const entries = Object.entries(buffer.histogram).sort(
    (a, b) => Number(a[0]) - Number(b[0]),
  );
  const max = Math.max(1, ...entries.map(([, v]) => v));
  const rows = entries
    .map(
      ([cls, count]) => `
      <div class="hist-row">
        <span class="hist-label">c${cls}</span>
        <div class="hist-bar"><div class="hist-fill" style="width:${(count / max) * 100}%"></div></div>
        <span class="hist-count">${count}</span>
      </div>`,
    )
    .join("");
  return `<div class="hist-title">replay buffer: ${buffer.occupancy} patterns</div>${rows}`;
}
