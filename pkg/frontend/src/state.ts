/** The edit buffer for one item under review.
 *
 * Pure state, no DOM: the app renders from it, the keyboard layer and
 * form controls mutate it. A few mutations carry small conveniences
 * (marking a layer implies the scene is anomalous; marking a scene
 * normal drops its layer flags) so the common flows stay one-keystroke,
 * but validity is always re-derived via the shared validation mirror,
 * never assumed.
 */

import type { Item, LayerCode, ReviewBody } from './types.js';
import { LAYER_CODES } from './types.js';
import { validateReview, type Issue } from './validation.js';

export type Mode = 'accept' | 'correct';

export class ReviewBuffer {
  readonly item: Item;
  mode: Mode;
  anomalous: boolean;
  layers: Set<LayerCode>;
  descriptions: Map<LayerCode, string>;
  note: string;

  constructor(item: Item) {
    this.item = item;
    this.mode = item.annotation !== null ? 'accept' : 'correct';
    const verdict = item.annotation?.verdict;
    this.anomalous = verdict?.anomalous ?? false;
    this.layers = new Set(
      (verdict?.layers ?? []).filter((c): c is LayerCode =>
        (LAYER_CODES as readonly string[]).includes(c),
      ),
    );
    this.descriptions = new Map();
    this.note = '';
  }

  setMode(mode: Mode): void {
    this.mode = mode;
  }

  toggleLayer(code: LayerCode): void {
    this.mode = 'correct';
    if (this.layers.has(code)) {
      this.layers.delete(code);
    } else {
      this.layers.add(code);
      this.anomalous = true;
    }
  }

  toggleAnomalous(): void {
    this.mode = 'correct';
    this.anomalous = !this.anomalous;
    if (!this.anomalous) {
      this.layers.clear();
    }
  }

  editDescription(code: LayerCode, text: string): void {
    this.descriptions.set(code, text);
  }

  setNote(text: string): void {
    this.note = text;
  }

  /** The request body this buffer would submit right now. */
  buildBody(reviewer: string): ReviewBody {
    const body: ReviewBody = { decision: this.mode, reviewer };
    if (this.mode === 'correct') {
      body.corrected = {
        anomalous: this.anomalous,
        layers: LAYER_CODES.filter((c) => this.layers.has(c)),
      };
    }
    const edited: Record<string, string> = {};
    for (const [code, text] of this.descriptions) {
      const trimmed = text.trim();
      const original = this.item.annotation?.scene?.[code];
      if (trimmed.length > 0 && trimmed !== original) {
        edited[code] = trimmed;
      }
    }
    if (Object.keys(edited).length > 0) {
      body.descriptions = edited;
    }
    if (this.note.trim().length > 0) {
      body.note = this.note.trim();
    }
    return body;
  }

  issues(reviewer: string): Issue[] {
    return validateReview(this.item, this.buildBody(reviewer));
  }

  canSubmit(reviewer: string): boolean {
    return this.issues(reviewer).length === 0;
  }
}
