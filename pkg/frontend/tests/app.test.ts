// @vitest-environment jsdom
import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest';

import { AnnotatorApp } from '../src/app.js';
import { ApiClient } from '../src/api.js';
import type { RatingPayload } from '../src/types.js';

const SCALES = {
  distortion_levels: ['Extreme', 'Severe', 'Moderate', 'Minor', 'Trivial', 'Non-existent'],
  quality_levels: ['Bad', 'Poor', 'Fair', 'Good', 'Excellent'],
  importance_levels: ['Unimportant', 'Minor', 'Normal', 'Important', 'Essential'],
  distortion_types: ['exposure', 'noise', 'blur', 'contrast', 'colorfulness', 'compression'],
};

/** In-memory stand-in for the annotation service HTTP surface. */
class FakeService {
  submissions: RatingPayload[] = [];
  ratings = new Map<string, Map<string, RatingPayload>>();
  failNextSubmit = false;
  respond409 = new Set<string>();

  constructor(public roiIds: string[]) {
    for (const id of roiIds) this.ratings.set(id, new Map());
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = new URL(String(input), 'http://fake');
    const path = url.pathname;
    if (path === '/api/tasks/next') {
      const annotator = url.searchParams.get('annotator');
      if (!annotator) return json({ error: 'annotator required' }, 400);
      const open = this.roiIds.filter(
        (id) => !this.ratings.get(id)!.has(annotator) && this.ratings.get(id)!.size < 7,
      );
      if (open.length === 0) return json({ task: null });
      open.sort((a, b) => this.ratings.get(b)!.size - this.ratings.get(a)!.size);
      return json({
        task: {
          roi_id: open[0],
          image_path: 'mem.png',
          mask_rle: { size: [2, 2], counts: [0, 4] },
          image_id: 'img',
          mask_reference: 'img_m0.json',
        },
      });
    }
    if (path.startsWith('/api/rois/')) {
      const id = decodeURIComponent(path.split('/').pop()!);
      if (!this.roiIds.includes(id)) return json({ error: 'unknown roi' }, 404);
      return json({
        roi_id: id,
        image_png_base64: 'aW1n',
        mask_rle: { size: [2, 2], counts: [1, 2, 1] },
        scales: SCALES,
      });
    }
    if (path === '/api/ratings') {
      if (this.failNextSubmit) {
        this.failNextSubmit = false;
        throw new TypeError('network down');
      }
      const body = JSON.parse(String(init?.body)) as RatingPayload;
      if (this.respond409.has(body.roi_id)) {
        return json({ error: 'finalized' }, 409);
      }
      if (body.quality < 0 || body.quality > 4) return json({ error: 'quality range' }, 400);
      this.submissions.push(body);
      this.ratings.get(body.roi_id)!.set(body.annotator_id, body);
      return json({ roi_id: body.roi_id, rater_count: this.ratings.get(body.roi_id)!.size });
    }
    if (path === '/api/progress') {
      const per: Record<string, number> = {};
      for (const [id, m] of this.ratings) per[id] = m.size;
      return json({
        total_rois: this.roiIds.length,
        finalized: [...this.ratings.values()].filter((m) => m.size >= 7).length,
        target_raters: 7,
        per_roi: per,
      });
    }
    return json({ error: `unhandled ${path}` }, 500);
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

let service: FakeService;
let app: AnnotatorApp;
let root: HTMLElement;

async function flush(): Promise<void> {
  for (let i = 0; i < 10; i++) await Promise.resolve();
}

function clickRadio(key: string, value: number): void {
  const input = root.querySelector<HTMLInputElement>(
    `input[name="group-${key}"][value="${value}"]`,
  );
  if (!input) throw new Error(`no radio for ${key}=${value}`);
  input.checked = true;
  input.dispatchEvent(new Event('change'));
}

function fillForm(values: Partial<Record<string, number>> = {}): void {
  for (const dt of SCALES.distortion_types) clickRadio(dt, values[dt] ?? 5);
  clickRadio('quality', values.quality ?? 3);
  clickRadio('importance', values.importance ?? 2);
}

function submitButton(): HTMLButtonElement {
  return root.querySelector<HTMLButtonElement>('.submit')!;
}

beforeEach(async () => {
  service = new FakeService(['roiA', 'roiB']);
  vi.stubGlobal('fetch', service.fetch);
  root = document.createElement('main');
  document.body.appendChild(root);
  app = new AnnotatorApp({ root, api: new ApiClient(''), annotator: 'ann1', now: () => 42 });
  await app.start();
  await flush();
});

afterEach(() => {
  vi.unstubAllGlobals();
  document.body.innerHTML = '';
});

describe('task rendering', () => {
  it('shows the rating form with eight groups', () => {
    expect(root.querySelectorAll('.rating-group')).toHaveLength(8);
    expect(app.phase).toBe('rating');
  });

  it('decodes the mask for the overlay', () => {
    expect(Array.from(app.maskBits!)).toEqual([0, 1, 1, 0]);
  });

  it('overlay toggle flips visibility and keeps selections', () => {
    clickRadio('blur', 2);
    const overlay = root.querySelector<HTMLCanvasElement>('.overlay-canvas')!;
    expect(overlay.style.visibility).toBe('visible');
    root.querySelector<HTMLButtonElement>('.overlay-toggle')!.click();
    expect(overlay.style.visibility).toBe('hidden');
    expect(app.form!.selection('blur')).toBe(2);
  });
});

describe('submit flow', () => {
  it('gates submission until the form is complete', () => {
    expect(submitButton().disabled).toBe(true);
    fillForm();
    expect(submitButton().disabled).toBe(false);
  });

  it('posts exactly the selected values', async () => {
    fillForm({ noise: 1, quality: 4, importance: 0 });
    submitButton().click();
    await flush();
    expect(service.submissions).toHaveLength(1);
    expect(service.submissions[0]).toEqual({
      roi_id: 'roiA',
      annotator_id: 'ann1',
      distortions: {
        exposure: 5,
        noise: 1,
        blur: 5,
        contrast: 5,
        colorfulness: 5,
        compression: 5,
      },
      quality: 4,
      importance: 0,
      timestamp: 42,
    });
  });

  it('fetches the next task and resets the form after an ack', async () => {
    fillForm();
    submitButton().click();
    await flush();
    expect(app.task!.roi_id).toBe('roiB');
    expect(app.form!.complete).toBe(false);
    expect(submitButton().disabled).toBe(true);
  });

  it('skips ahead with a notice on 409', async () => {
    service.respond409.add('roiA');
    fillForm();
    submitButton().click();
    await flush();
    expect(root.querySelector('.notice')!.textContent).toMatch(/finalized/);
    expect(app.task!.roi_id).toBe('roiB');
  });

  it('keeps selections and offers retry on network failure', async () => {
    service.failNextSubmit = true;
    fillForm({ quality: 1 });
    submitButton().click();
    await flush();
    expect(app.phase).toBe('error');
    expect(app.form!.selection('quality')).toBe(1);
    const retry = root.querySelector<HTMLButtonElement>('.retry')!;
    expect(retry.hidden).toBe(false);
    retry.click();
    await flush();
    expect(service.submissions).toHaveLength(1);
    expect(service.submissions[0].quality).toBe(1);
  });

  it('announces completion when tasks are exhausted', async () => {
    fillForm();
    submitButton().click();
    await flush();
    fillForm();
    submitButton().click();
    await flush();
    expect(app.phase).toBe('done');
    expect(root.querySelector('.status')!.textContent).toMatch(/All tasks rated/);
  });
});

describe('keyboard shortcuts', () => {
  function press(key: string): void {
    root.dispatchEvent(new KeyboardEvent('keydown', { key, bubbles: true }));
  }

  it('digits + Enter produce the same payload as mouse input', async () => {
    // keyboard annotator
    const values = [5, 1, 5, 5, 5, 5, 4, 0];
    for (const v of values) {
      press(String(v));
      press('ArrowDown');
    }
    press('Enter');
    await flush();
    const viaKeyboard = service.submissions.pop()!;

    // mouse annotator on the next task (roiB)
    fillForm({ noise: 1, quality: 4, importance: 0 });
    submitButton().click();
    await flush();
    const viaMouse = service.submissions.pop()!;
    expect(viaKeyboard.distortions).toEqual(viaMouse.distortions);
    expect(viaKeyboard.quality).toBe(viaMouse.quality);
    expect(viaKeyboard.importance).toBe(viaMouse.importance);
  });

  it('digit selection reflects into the DOM radios', () => {
    press('2');
    const checked = root.querySelector<HTMLInputElement>('input[name="group-exposure"]:checked');
    expect(checked?.value).toBe('2');
  });

  it('Enter does nothing while incomplete', async () => {
    press('Enter');
    await flush();
    expect(service.submissions).toHaveLength(0);
  });
});
