import { describe, expect, it } from 'vitest';

import { RatingFormState, ratingGroups } from '../src/form.js';

const SCALES = {
  distortion_levels: ['Extreme', 'Severe', 'Moderate', 'Minor', 'Trivial', 'Non-existent'],
  quality_levels: ['Bad', 'Poor', 'Fair', 'Good', 'Excellent'],
  importance_levels: ['Unimportant', 'Minor', 'Normal', 'Important', 'Essential'],
  distortion_types: ['exposure', 'noise', 'blur', 'contrast', 'colorfulness', 'compression'],
};

function freshForm(): RatingFormState {
  return new RatingFormState(ratingGroups(SCALES));
}

function fillAll(form: RatingFormState): void {
  for (const dt of SCALES.distortion_types) form.select(dt, 5);
  form.select('quality', 3);
  form.select('importance', 2);
}

describe('RatingFormState', () => {
  it('has eight groups: six distortions plus quality and importance', () => {
    const form = freshForm();
    expect(form.groups.map((g) => g.key)).toEqual([...SCALES.distortion_types, 'quality', 'importance']);
    expect(form.groups[0].options).toHaveLength(6);
    expect(form.groups[6].options).toHaveLength(5);
  });

  it('is complete only when all eight selections are made', () => {
    const form = freshForm();
    expect(form.complete).toBe(false);
    for (const dt of SCALES.distortion_types) form.select(dt, 4);
    expect(form.complete).toBe(false);
    form.select('quality', 0);
    expect(form.complete).toBe(false);
    form.select('importance', 4);
    expect(form.complete).toBe(true);
  });

  it('rejects out-of-range selections', () => {
    const form = freshForm();
    expect(() => form.select('quality', 5)).toThrow(/outside/);
    expect(() => form.select('blur', 6)).toThrow(/outside/);
    expect(() => form.select('nope', 1)).toThrow(/unknown/);
  });

  it('builds the exact service payload', () => {
    const form = freshForm();
    fillAll(form);
    const payload = form.toPayload('roi7', 'ann1', 123.5);
    expect(payload).toEqual({
      roi_id: 'roi7',
      annotator_id: 'ann1',
      distortions: {
        exposure: 5,
        noise: 5,
        blur: 5,
        contrast: 5,
        colorfulness: 5,
        compression: 5,
      },
      quality: 3,
      importance: 2,
      timestamp: 123.5,
    });
  });

  it('refuses to build an incomplete payload', () => {
    const form = freshForm();
    expect(() => form.toPayload('roi', 'a', 0)).toThrow(/incomplete/);
  });

  it('digit keys select within the focused group, matching select()', () => {
    const keyboard = freshForm();
    const mouse = freshForm();
    // keyboard: walk every group, press a digit
    const digits = [0, 1, 2, 3, 4, 5, 4, 3];
    digits.forEach((digit, i) => {
      keyboard.focusedGroup = i;
      expect(keyboard.pressDigit(digit)).toBe(true);
    });
    mouse.select('exposure', 0);
    mouse.select('noise', 1);
    mouse.select('blur', 2);
    mouse.select('contrast', 3);
    mouse.select('colorfulness', 4);
    mouse.select('compression', 5);
    mouse.select('quality', 4);
    mouse.select('importance', 3);
    expect(keyboard.toPayload('r', 'a', 1)).toEqual(mouse.toPayload('r', 'a', 1));
  });

  it('ignores digits outside the focused group range', () => {
    const form = freshForm();
    form.focusedGroup = 6; // quality: levels 0..4
    expect(form.pressDigit(5)).toBe(false);
    expect(form.selection('quality')).toBeUndefined();
  });

  it('focus wraps in both directions', () => {
    const form = freshForm();
    form.focusNext(-1);
    expect(form.focusedGroup).toBe(7);
    form.focusNext(1);
    expect(form.focusedGroup).toBe(0);
  });

  it('reset clears selections and focus', () => {
    const form = freshForm();
    fillAll(form);
    form.focusedGroup = 5;
    form.reset();
    expect(form.complete).toBe(false);
    expect(form.focusedGroup).toBe(0);
  });
});
