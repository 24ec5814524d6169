/**
 * Annotator client: fetches the next ROI task, shows the image with a
 * toggleable mask overlay, collects the eight ratings, and submits.
 *
 * Keyboard: digits select a level in the focused group, ArrowUp/ArrowDown
 * move between groups, Enter submits. Selections survive network failures;
 * a 409 (finalized ROI) skips ahead with a notice.
 */

import { ApiClient, ApiError } from './api.js';
import { RatingFormState, ratingGroups } from './form.js';
import { decodeRle, overlayPixels } from './rle.js';
import type { RoiPayload, RoiTask } from './types.js';

export interface AppOptions {
  root: HTMLElement;
  api: ApiClient;
  annotator: string;
  now?: () => number;
}

type Phase = 'loading' | 'rating' | 'done' | 'error';

export class AnnotatorApp {
  readonly root: HTMLElement;
  readonly api: ApiClient;
  readonly annotator: string;
  private readonly now: () => number;

  phase: Phase = 'loading';
  task: RoiTask | null = null;
  payload: RoiPayload | null = null;
  form: RatingFormState | null = null;
  overlayVisible = true;
  /** Last decoded mask bits; kept for tests and redraws. */
  maskBits: Uint8Array | null = null;
  lastError = '';

  private els: {
    status: HTMLElement;
    progress: HTMLElement;
    notice: HTMLElement;
    canvasWrap: HTMLElement;
    image: HTMLCanvasElement;
    overlay: HTMLCanvasElement;
    toggle: HTMLButtonElement;
    form: HTMLElement;
    submit: HTMLButtonElement;
    retry: HTMLButtonElement;
  };

  constructor(opts: AppOptions) {
    this.root = opts.root;
    this.api = opts.api;
    this.annotator = opts.annotator;
    this.now = opts.now ?? (() => Date.now() / 1000);
    this.els = this.buildSkeleton();
    this.root.addEventListener('keydown', (e) => this.onKey(e as KeyboardEvent));
  }

  private buildSkeleton() {
    this.root.innerHTML = '';
    const doc = this.root.ownerDocument;
    const make = <K extends keyof HTMLElementTagNameMap>(tag: K, cls: string, parent: Element) => {
      const el = doc.createElement(tag);
      el.className = cls;
      parent.appendChild(el);
      return el;
    };
    const header = make('header', 'header', this.root);
    const title = make('h1', 'title', header);
    title.textContent = 'ROI annotation';
    const status = make('span', 'status', header);
    const progress = make('span', 'progress', header);
    const notice = make('div', 'notice', this.root);
    const canvasWrap = make('div', 'canvas-wrap', this.root);
    const image = make('canvas', 'image-canvas', canvasWrap);
    const overlay = make('canvas', 'overlay-canvas', canvasWrap);
    const toggle = make('button', 'overlay-toggle', canvasWrap);
    toggle.type = 'button';
    toggle.textContent = 'Hide mask';
    toggle.addEventListener('click', () => this.toggleOverlay());
    const form = make('div', 'form', this.root);
    const submit = make('button', 'submit', this.root);
    submit.type = 'button';
    submit.textContent = 'Submit rating';
    submit.disabled = true;
    submit.addEventListener('click', () => void this.submit());
    const retry = make('button', 'retry', this.root);
    retry.type = 'button';
    retry.textContent = 'Retry';
    retry.hidden = true;
    retry.addEventListener('click', () => void this.retry());
    return { status, progress, notice, canvasWrap, image, overlay, toggle, form, submit, retry };
  }

  async start(): Promise<void> {
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    this.phase = 'loading';
    this.els.status.textContent = 'Loading…';
    try {
      const task = await this.api.nextTask(this.annotator);
      if (task === null) {
        this.phase = 'done';
        this.task = null;
        this.payload = null;
        this.els.status.textContent = 'All tasks rated. Thank you!';
        this.els.submit.disabled = true;
        this.els.form.innerHTML = '';
        return;
      }
      const payload = await this.api.getRoi(task.roi_id);
      this.task = task;
      this.payload = payload;
      this.form = new RatingFormState(ratingGroups(payload.scales));
      this.renderTask(payload);
      this.buildFormDom();
      await this.refreshProgress();
      this.phase = 'rating';
      this.els.status.textContent = `Rating ${task.roi_id}`;
      this.els.retry.hidden = true;
      this.updateSubmitGate();
    } catch (err) {
      this.showError(err, () => this.loadNext());
    }
  }

  /** Draw the image and its semi-transparent mask overlay. */
  renderTask(payload: RoiPayload): void {
    const [h, w] = payload.mask_rle.size;
    this.maskBits = decodeRle(payload.mask_rle);
    const { image, overlay } = this.els;
    image.width = w;
    image.height = h;
    overlay.width = w;
    overlay.height = h;

    const ictx = image.getContext ? image.getContext('2d') : null;
    if (ictx) {
      const doc = this.root.ownerDocument;
      const img = doc.createElement('img');
      img.onload = () => ictx.drawImage(img, 0, 0, w, h);
      img.src = `data:image/png;base64,${payload.image_png_base64}`;
    }
    const octx = overlay.getContext ? overlay.getContext('2d') : null;
    if (octx) {
      const pixels = overlayPixels(this.maskBits);
      const data = new ImageData(new Uint8ClampedArray(pixels), w, h);
      octx.putImageData(data, 0, 0);
    }
    overlay.style.visibility = this.overlayVisible ? 'visible' : 'hidden';
  }

  toggleOverlay(): void {
    this.overlayVisible = !this.overlayVisible;
    this.els.overlay.style.visibility = this.overlayVisible ? 'visible' : 'hidden';
    this.els.toggle.textContent = this.overlayVisible ? 'Hide mask' : 'Show mask';
  }

  private buildFormDom(): void {
    const doc = this.root.ownerDocument;
    const form = this.els.form;
    form.innerHTML = '';
    this.form!.groups.forEach((group, gi) => {
      const row = doc.createElement('fieldset');
      row.className = 'rating-group';
      row.dataset.group = group.key;
      if (gi === this.form!.focusedGroup) row.dataset.focused = 'true';
      const legend = doc.createElement('legend');
      legend.textContent = group.label;
      row.appendChild(legend);
      group.options.forEach((name, value) => {
        const label = doc.createElement('label');
        const input = doc.createElement('input');
        input.type = 'radio';
        input.name = `group-${group.key}`;
        input.value = String(value);
        input.addEventListener('change', () => {
          this.form!.select(group.key, value);
          this.form!.focusedGroup = gi;
          this.syncFocusMarkers();
          this.updateSubmitGate();
        });
        label.appendChild(input);
        label.appendChild(doc.createTextNode(`${name} (${value})`));
        row.appendChild(label);
      });
      row.addEventListener('click', () => {
        this.form!.focusedGroup = gi;
        this.syncFocusMarkers();
      });
      form.appendChild(row);
    });
  }

  private syncFocusMarkers(): void {
    const rows = this.els.form.querySelectorAll<HTMLElement>('.rating-group');
    rows.forEach((row, i) => {
      if (i === this.form!.focusedGroup) row.dataset.focused = 'true';
      else delete row.dataset.focused;
    });
  }

  /** Reflect a selection made through the state object back into the DOM. */
  private syncRadio(key: string, value: number): void {
    const input = this.els.form.querySelector<HTMLInputElement>(
      `input[name="group-${key}"][value="${value}"]`,
    );
    if (input) input.checked = true;
  }

  updateSubmitGate(): void {
    this.els.submit.disabled = !(this.phase !== 'error' && this.form?.complete === true);
  }

  onKey(e: KeyboardEvent): void {
    if (this.phase !== 'rating' || !this.form) return;
    if (e.key >= '0' && e.key <= '9') {
      const digit = Number(e.key);
      if (this.form.pressDigit(digit)) {
        const group = this.form.groups[this.form.focusedGroup];
        this.syncRadio(group.key, digit);
        this.updateSubmitGate();
        e.preventDefault();
      }
    } else if (e.key === 'ArrowDown') {
      this.form.focusNext(1);
      this.syncFocusMarkers();
      e.preventDefault();
    } else if (e.key === 'ArrowUp') {
      this.form.focusNext(-1);
      this.syncFocusMarkers();
      e.preventDefault();
    } else if (e.key === 'Enter') {
      if (this.form.complete) void this.submit();
      e.preventDefault();
    }
  }

  async submit(): Promise<void> {
    if (!this.form || !this.task || !this.form.complete) return;
    const payload = this.form.toPayload(this.task.roi_id, this.annotator, this.now());
    try {
      const ack = await this.api.submitRating(payload);
      this.setNotice(`Saved ${ack.roi_id} (rater ${ack.rater_count}/7)`);
      this.form.reset();
      await this.loadNext();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.setNotice('This ROI was finalized by other annotators; moving on.');
        this.form.reset();
        await this.loadNext();
      } else if (err instanceof ApiError && err.status === 400) {
        this.setNotice(`Rejected: ${err.message}`);
        this.updateSubmitGate();
      } else {
        // network failure: keep selections, offer retry
        this.showError(err, () => this.submit());
      }
    }
  }

  private pendingRetry: (() => Promise<void> | void) | null = null;

  private showError(err: unknown, retry: () => Promise<void> | void): void {
    this.phase = 'error';
    this.lastError = err instanceof Error ? err.message : String(err);
    this.els.status.textContent = `Error: ${this.lastError}`;
    this.els.retry.hidden = false;
    this.pendingRetry = retry;
    this.updateSubmitGate();
  }

  async retry(): Promise<void> {
    const action = this.pendingRetry;
    this.pendingRetry = null;
    this.els.retry.hidden = true;
    this.phase = this.task ? 'rating' : 'loading';
    this.updateSubmitGate();
    if (action) await action();
  }

  private setNotice(text: string): void {
    this.els.notice.textContent = text;
  }

  async refreshProgress(): Promise<void> {
    try {
      const info = await this.api.progress();
      const count = this.task ? (info.per_roi[this.task.roi_id] ?? 0) : 0;
      this.els.progress.textContent =
        `raters ${count}/${info.target_raters} · finalized ${info.finalized}/${info.total_rois}`;
    } catch {
      this.els.progress.textContent = '';
    }
  }
}

export function mount(root: HTMLElement, baseUrl = ''): AnnotatorApp {
  const params = new URLSearchParams(root.ownerDocument.location?.search ?? '');
  const annotator = params.get('annotator') ?? `anon-${Math.random().toString(36).slice(2, 8)}`;
  const app = new AnnotatorApp({ root, api: new ApiClient(baseUrl), annotator });
  void app.start();
  return app;
}
