/** Global key bindings for the review flow. */

import { LAYER_CODES, type LayerCode } from './types.js';

export interface KeyActions {
  accept(): void;
  correct(): void;
  toggleLayer(code: LayerCode): void;
  toggleAnomalous(): void;
  submit(): void;
  skip(): void;
  cycleResolution(): void;
}

// Digits 1-4 follow display order: Street, Infrastructure,
// Movable Objects, Environment.
const DIGIT_TO_LAYER = new Map<string, LayerCode>(
  LAYER_CODES.map((code, index) => [String(index + 1), code]),
);

const TEXT_INPUT_TYPES = new Set(['text', 'search', 'url', 'tel', 'email', 'password', 'number']);

function isEditable(target: EventTarget | null): boolean {
  if (!(target instanceof HTMLElement)) {
    return false;
  }
  if (target.isContentEditable || target.tagName === 'TEXTAREA') {
    return true;
  }
  // Checkboxes stay on the global map; only text entry swallows keys.
  return target instanceof HTMLInputElement && TEXT_INPUT_TYPES.has(target.type);
}

/** Attach the key map to `doc`; returns a detach function. */
export function bindKeys(doc: Document, actions: KeyActions): () => void {
  const handler = (event: KeyboardEvent): void => {
    // Typing in a text field must never trigger review actions.
    if (isEditable(event.target)) {
      return;
    }
    if (event.ctrlKey || event.metaKey || event.altKey) {
      return;
    }
    const layer = DIGIT_TO_LAYER.get(event.key);
    if (layer !== undefined) {
      actions.toggleLayer(layer);
      event.preventDefault();
      return;
    }
    switch (event.key) {
      case 'a':
        actions.accept();
        break;
      case 'c':
        actions.correct();
        break;
      case ' ':
        actions.toggleAnomalous();
        break;
      case 'Enter':
        actions.submit();
        break;
      case 'n':
        actions.skip();
        break;
      case 'r':
        actions.cycleResolution();
        break;
      default:
        return;
    }
    event.preventDefault();
  };
  doc.addEventListener('keydown', handler);
  return () => doc.removeEventListener('keydown', handler);
}
