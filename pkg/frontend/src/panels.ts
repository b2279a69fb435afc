/**
 * Class panel state: one panel per class with staged count, the latest
 * confidence from the API, and a selected flag. Exactly one panel is
 * selected during inference: the argmax, drawn as the highlighted
 * rectangle.
 */

export interface ClassPanel {
  index: number;
  name: string;
  staged: number;
  confidence: number | null;
  selected: boolean;
}

export function makePanels(classes: number, names?: string[]): ClassPanel[] {
  return Array.from({ length: classes }, (_, i) => ({
    index: i,
    name: names?.[i] ?? `class ${i}`,
    staged: 0,
    confidence: null,
    selected: false,
  }));
}

/** Apply a prediction: confidences straight from the API, argmax selected. */
export function applyPrediction(panels: ClassPanel[], probs: number[]): ClassPanel[] {
  if (probs.length !== panels.length) {
    throw new Error(`got ${probs.length} probabilities for ${panels.length} panels`);
  }
  let best = 0;
  for (let i = 1; i < probs.length; i++) {
    if (probs[i] > probs[best]) best = i;
  }
  return panels.map((p, i) => ({ ...p, confidence: probs[i], selected: i === best }));
}

export function applyStagedCounts(panels: ClassPanel[], counts: Record<string, number>): ClassPanel[] {
  return panels.map((p) => ({ ...p, staged: counts[String(p.index)] ?? p.staged }));
}

export function clearPanels(panels: ClassPanel[]): ClassPanel[] {
  return panels.map((p) => ({ ...p, staged: 0, confidence: null, selected: false }));
}
