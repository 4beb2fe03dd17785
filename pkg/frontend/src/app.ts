/** DOM shell around the review flow: one item on screen, keyboard first.
 *
 * The app owns no label logic. It renders a `ReviewBuffer`, routes key
 * presses and form events into it, and talks to the server through
 * `ApiClient`. A full re-render happens only when a new item arrives;
 * in-item updates touch checkboxes, the issue list and the status line
 * so open textareas keep their caret.
 */

import { ApiClient, RequestFailed } from './api.js';
import { bindKeys, type KeyActions } from './keyboard.js';
import { ReviewBuffer } from './state.js';
import { LAYER_CODES, LAYER_LABELS, type Item, type Progress } from './types.js';

const RESOLUTIONS = [180, 240, 360, 540, 720] as const;
const DEFAULT_RESOLUTION_INDEX = 2; // 360p

type Child = Node | string;

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string> = {},
  children: Child[] = [],
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  for (const [name, value] of Object.entries(attrs)) {
    node.setAttribute(name, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export class App {
  private readonly root: HTMLElement;
  private readonly doc: Document;
  private readonly client: ApiClient;
  private readonly reviewer: string;
  private buffer: ReviewBuffer | null = null;
  private progress: Progress | null = null;
  private resolutionIndex = DEFAULT_RESOLUTION_INDEX;
  private status = '';
  private busy = false;
  private detach: (() => void) | null = null;

  constructor(root: HTMLElement, client: ApiClient, reviewer: string) {
    this.root = root;
    this.doc = root.ownerDocument;
    this.client = client;
    this.reviewer = reviewer;
  }

  async start(): Promise<void> {
    this.detach = bindKeys(this.doc, this.keyActions());
    await this.loadNext();
  }

  stop(): void {
    if (this.detach !== null) {
      this.detach();
      this.detach = null;
    }
  }

  private keyActions(): KeyActions {
    return {
      accept: () => this.edit((buffer) => buffer.setMode('accept')),
      correct: () => this.edit((buffer) => buffer.setMode('correct')),
      toggleLayer: (code) => this.edit((buffer) => buffer.toggleLayer(code)),
      toggleAnomalous: () => this.edit((buffer) => buffer.toggleAnomalous()),
      submit: () => {
        void this.submit();
      },
      skip: () => {
        void this.loadNext();
      },
      cycleResolution: () => this.cycleResolution(),
    };
  }

  private edit(change: (buffer: ReviewBuffer) => void): void {
    if (this.buffer === null) {
      return;
    }
    change(this.buffer);
    this.refresh();
  }

  private cycleResolution(): void {
    if (this.buffer === null) {
      return;
    }
    this.resolutionIndex = (this.resolutionIndex + 1) % RESOLUTIONS.length;
    this.refresh();
  }

  private async loadNext(): Promise<void> {
    try {
      const response = await this.client.nextItem(this.reviewer);
      this.progress = response.progress;
      this.buffer = response.item === null ? null : new ReviewBuffer(response.item);
      this.resolutionIndex = DEFAULT_RESOLUTION_INDEX;
      this.status = '';
    } catch (error) {
      this.buffer = null;
      this.status =
        error instanceof RequestFailed
          ? `Queue request failed (${error.status}): ${error.message}`
          : `Queue request failed: ${String(error)}`;
    }
    this.render();
  }

  private async submit(): Promise<void> {
    const buffer = this.buffer;
    if (buffer === null || this.busy) {
      return;
    }
    if (!buffer.canSubmit(this.reviewer)) {
      this.status = 'Cannot submit: fix the listed issues first.';
      this.refresh();
      return;
    }
    this.busy = true;
    this.refresh();
    try {
      const response = await this.client.submitReview(
        buffer.item.id,
        buffer.buildBody(this.reviewer),
      );
      this.progress = response.progress;
      this.status = '';
      this.busy = false;
      await this.loadNext();
    } catch (error) {
      this.busy = false;
      this.status =
        error instanceof RequestFailed
          ? `Server rejected the review (${error.status}): ${error.message}`
          : `Request failed: ${String(error)}`;
      this.refresh();
    }
  }

  private verdictSummary(item: Item): string {
    const annotation = item.annotation;
    if (annotation === null) {
      return 'No model annotation: label from scratch.';
    }
    const verdict = annotation.verdict;
    const layers = verdict.layers.length > 0 ? ` [${verdict.layers.join(', ')}]` : '';
    const parse = verdict.parse_status === 'ok' ? '' : ` (parse: ${verdict.parse_status})`;
    return `${annotation.model}: ${verdict.anomalous ? 'anomalous' : 'normal'}${layers}${parse}`;
  }

  private progressSummary(): string {
    if (this.progress === null) {
      return '';
    }
    const p = this.progress;
    return (
      `Reviewer ${this.reviewer}: ${p.reviewed} of ${p.total} reviewed ` +
      `(${p.accepted} accepted, ${p.corrected} corrected, ${p.unreviewed} open)`
    );
  }

  /** Rebuild the whole panel. Called once per queue item. */
  private render(): void {
    const doc = this.doc;
    this.root.replaceChildren(
      el(doc, 'header', {}, [
        el(doc, 'h1', {}, ['Scene label review']),
        el(doc, 'div', { id: 'progress', class: 'progress' }),
      ]),
    );
    if (this.buffer === null) {
      this.root.append(
        el(doc, 'main', { id: 'panel', class: 'panel' }, [
          el(doc, 'p', { id: 'done' }, ['Queue drained: nothing left to review.']),
          el(doc, 'div', { id: 'status', class: 'status' }),
        ]),
      );
      this.refresh();
      return;
    }
    const item = this.buffer.item;

    const image = el(doc, 'img', {
      id: 'scene-image',
      alt: `camera frame for item ${item.id}`,
    });
    const imagePane = el(doc, 'section', { class: 'image-pane' }, [
      image,
      el(doc, 'div', { id: 'resolution', class: 'hint' }),
    ]);

    const acceptBtn = el(doc, 'button', { id: 'mode-accept', type: 'button' }, [
      'Accept model label (a)',
    ]);
    acceptBtn.addEventListener('click', () => this.edit((buffer) => buffer.setMode('accept')));
    const correctBtn = el(doc, 'button', { id: 'mode-correct', type: 'button' }, [
      'Correct label (c)',
    ]);
    correctBtn.addEventListener('click', () => this.edit((buffer) => buffer.setMode('correct')));

    const anomalousBox = el(doc, 'input', { type: 'checkbox', id: 'anomalous' });
    anomalousBox.addEventListener('change', () => this.edit((buffer) => buffer.toggleAnomalous()));

    const layerList = el(doc, 'ul', { id: 'layers', class: 'layers' });
    for (const code of LAYER_CODES) {
      const box = el(doc, 'input', {
        type: 'checkbox',
        class: 'layer-toggle',
        'data-code': code,
      });
      box.addEventListener('change', () => this.edit((buffer) => buffer.toggleLayer(code)));
      const digit = String(LAYER_CODES.indexOf(code) + 1);
      const desc = el(doc, 'textarea', {
        class: 'layer-desc',
        'data-code': code,
        rows: '2',
        placeholder: `${LAYER_LABELS[code]} description`,
      });
      desc.value = item.annotation?.scene?.[code] ?? '';
      desc.addEventListener('input', () => {
        if (this.buffer !== null) {
          this.buffer.editDescription(code, desc.value);
          this.refresh();
        }
      });
      layerList.append(
        el(doc, 'li', {}, [
          el(doc, 'label', {}, [box, ` ${digit} ${LAYER_LABELS[code]}`]),
          desc,
        ]),
      );
    }

    const note = el(doc, 'textarea', {
      id: 'note',
      rows: '2',
      placeholder: 'note for the audit log (optional)',
    });
    note.addEventListener('input', () => {
      if (this.buffer !== null) {
        this.buffer.setNote(note.value);
        this.refresh();
      }
    });

    const submitBtn = el(doc, 'button', { id: 'submit', type: 'button' }, ['Submit (Enter)']);
    submitBtn.addEventListener('click', () => {
      void this.submit();
    });
    const repollBtn = el(doc, 'button', { id: 'repoll', type: 'button' }, ['Re-poll queue (n)']);
    repollBtn.addEventListener('click', () => {
      void this.loadNext();
    });

    const reviewPane = el(doc, 'section', { class: 'review-pane' }, [
      el(doc, 'h2', { id: 'item-id' }, [`Item ${item.id}`]),
      el(doc, 'div', { id: 'model-verdict', class: 'verdict' }, [this.verdictSummary(item)]),
      el(doc, 'div', { id: 'mode', class: 'mode' }),
      el(doc, 'div', { class: 'mode-buttons' }, [acceptBtn, correctBtn]),
      el(doc, 'label', { class: 'anomalous' }, [anomalousBox, ' Anomalous scene (Space)']),
      layerList,
      el(doc, 'label', { class: 'note-label' }, ['Note ', note]),
      el(doc, 'ul', { id: 'issues', class: 'issues' }),
      el(doc, 'div', { id: 'status', class: 'status' }),
      el(doc, 'div', { class: 'actions' }, [submitBtn, repollBtn]),
    ]);

    this.root.append(el(doc, 'main', { id: 'panel', class: 'panel' }, [imagePane, reviewPane]));
    this.refresh();
  }

  /** Sync the existing DOM with buffer state; never rebuilds textareas. */
  private refresh(): void {
    const q = <T extends Element>(selector: string): T | null =>
      this.root.querySelector<T>(selector);

    const progressNode = q<HTMLElement>('#progress');
    if (progressNode !== null) {
      progressNode.textContent = this.progressSummary();
    }
    const statusNode = q<HTMLElement>('#status');
    if (statusNode !== null) {
      statusNode.textContent = this.status;
    }
    const buffer = this.buffer;
    if (buffer === null) {
      return;
    }

    const modeNode = q<HTMLElement>('#mode');
    if (modeNode !== null) {
      modeNode.textContent =
        buffer.mode === 'accept'
          ? 'Decision: accept the model label'
          : 'Decision: correct the label';
    }
    q<HTMLButtonElement>('#mode-accept')?.classList.toggle('active', buffer.mode === 'accept');
    q<HTMLButtonElement>('#mode-correct')?.classList.toggle('active', buffer.mode === 'correct');

    const anomalousBox = q<HTMLInputElement>('#anomalous');
    if (anomalousBox !== null) {
      anomalousBox.checked = buffer.anomalous;
    }
    for (const code of LAYER_CODES) {
      const box = q<HTMLInputElement>(`.layer-toggle[data-code="${code}"]`);
      if (box !== null) {
        box.checked = buffer.layers.has(code);
      }
    }

    const level = RESOLUTIONS[this.resolutionIndex];
    const image = q<HTMLImageElement>('#scene-image');
    if (image !== null) {
      image.src = this.client.imageUrl(buffer.item.image_url, level);
    }
    const resolutionNode = q<HTMLElement>('#resolution');
    if (resolutionNode !== null) {
      resolutionNode.textContent = `${level}p rendition (r cycles)`;
    }

    const issues = buffer.issues(this.reviewer);
    const issuesNode = q<HTMLUListElement>('#issues');
    if (issuesNode !== null) {
      issuesNode.replaceChildren(
        ...issues.map((issue) => el(this.doc, 'li', { 'data-rule': issue.rule }, [issue.message])),
      );
    }
    const submitBtn = q<HTMLButtonElement>('#submit');
    if (submitBtn !== null) {
      submitBtn.disabled = this.busy || issues.length > 0;
    }
  }
}
