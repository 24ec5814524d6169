/**
 * Rating form state: six distortion severities (0..5), quality (0..4),
 * importance (0..4). Submission unlocks only when all eight are chosen.
 */

import { DISTORTION_TYPES } from './types.js';
import type { RatingPayload } from './types.js';

export interface RatingGroup {
  key: string; // distortion family, "quality" or "importance"
  label: string;
  options: string[]; // level names, index = encoded value
}

export function ratingGroups(scales: {
  distortion_levels: string[];
  quality_levels: string[];
  importance_levels: string[];
  distortion_types: string[];
}): RatingGroup[] {
  const groups: RatingGroup[] = scales.distortion_types.map((dt) => ({
    key: dt,
    label: dt,
    options: scales.distortion_levels,
  }));
  groups.push({ key: 'quality', label: 'quality', options: scales.quality_levels });
  groups.push({ key: 'importance', label: 'importance', options: scales.importance_levels });
  return groups;
}

export class RatingFormState {
  readonly groups: RatingGroup[];
  private selections = new Map<string, number>();
  focusedGroup = 0;

  constructor(groups: RatingGroup[]) {
    this.groups = groups;
  }

  select(key: string, value: number): void {
    const group = this.groups.find((g) => g.key === key);
    if (!group) throw new Error(`unknown rating group ${key}`);
    if (!Number.isInteger(value) || value < 0 || value >= group.options.length) {
      throw new Error(`value ${value} outside 0..${group.options.length - 1} for ${key}`);
    }
    this.selections.set(key, value);
  }

  selection(key: string): number | undefined {
    return this.selections.get(key);
  }

  get complete(): boolean {
    return this.groups.every((g) => this.selections.has(g.key));
  }

  reset(): void {
    this.selections.clear();
    this.focusedGroup = 0;
  }

  focusNext(delta: number): void {
    const n = this.groups.length;
    this.focusedGroup = (this.focusedGroup + delta + n) % n;
  }

  /** Digit key pressed: select that level in the focused group if valid. */
  pressDigit(digit: number): boolean {
    const group = this.groups[this.focusedGroup];
    if (digit < 0 || digit >= group.options.length) return false;
    this.select(group.key, digit);
    return true;
  }

  toPayload(roiId: string, annotator: string, now: number): RatingPayload {
    if (!this.complete) {
      throw new Error('form incomplete');
    }
    const distortions: Record<string, number> = {};
    for (const dt of DISTORTION_TYPES) {
      distortions[dt] = this.selections.get(dt)!;
    }
    return {
      roi_id: roiId,
      annotator_id: annotator,
      distortions,
      quality: this.selections.get('quality')!,
      importance: this.selections.get('importance')!,
      timestamp: now,
    };
  }
}
