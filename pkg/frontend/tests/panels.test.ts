import { describe, expect, it } from "vitest";

import { renderPanels } from "../src/bars.js";
import { applyPrediction, applyStagedCounts, clearPanels, makePanels } from "../src/panels.js";

describe("class panels", () => {
  it("start unstaged and unselected", () => {
    const panels = makePanels(4);
    expect(panels).toHaveLength(4);
    expect(panels.every((p) => p.staged === 0 && p.confidence === null && !p.selected)).toBe(true);
  });

  it("select exactly the argmax during inference", () => {
    const panels = applyPrediction(makePanels(4), [0.1, 0.6, 0.2, 0.1]);
    expect(panels.filter((p) => p.selected)).toHaveLength(1);
    expect(panels[1].selected).toBe(true);
  });

  it("display exactly the API's numbers (thin-client contract)", () => {
    const probs = [0.125, 0.5, 0.25, 0.125];
    const panels = applyPrediction(makePanels(4), probs);
    expect(panels.map((p) => p.confidence)).toEqual(probs);
  });

  it("reject probability vectors of the wrong length", () => {
    expect(() => applyPrediction(makePanels(4), [1, 0])).toThrow();
  });

  it("apply staged counts by class index", () => {
    const panels = applyStagedCounts(makePanels(3), { "0": 5, "2": 1 });
    expect(panels.map((p) => p.staged)).toEqual([5, 0, 1]);
  });

  it("clear wipes confidences, staging, and selection", () => {
    let panels = applyPrediction(makePanels(2), [0.9, 0.1]);
    panels = applyStagedCounts(panels, { "0": 3 });
    panels = clearPanels(panels);
    expect(panels.every((p) => p.staged === 0 && p.confidence === null && !p.selected)).toBe(true);
  });
});

describe("panel rendering", () => {
  it("marks only the selected panel with the highlight class", () => {
    const html = renderPanels(applyPrediction(makePanels(3), [0.2, 0.7, 0.1]));
    expect(html.match(/class-panel selected/g)).toHaveLength(1);
    expect(html).toContain("70%");
  });

  it("renders staged counts and capture buttons per class", () => {
    const html = renderPanels(applyStagedCounts(makePanels(2), { "1": 4 }));
    expect(html).toContain("4 staged");
    expect(html.match(/capture-btn/g)).toHaveLength(2);
  });
});
