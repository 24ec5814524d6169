/**
 * Wire types shared with the annotation service.
 */

export interface RleMask {
  size: [number, number]; // [H, W]
  counts: number[]; // alternating run lengths, zeros first
}

export interface RoiTask {
  roi_id: string;
  image_path: string;
  mask_rle: RleMask;
  image_id: string;
  mask_reference: string;
}

export interface RoiPayload {
  roi_id: string;
  image_png_base64: string;
  mask_rle: RleMask;
  scales: {
    distortion_levels: string[]; // Extreme..Trivial, Non-existent
    quality_levels: string[];
    importance_levels: string[];
    distortion_types: string[];
  };
}

export interface RatingPayload {
  roi_id: string;
  annotator_id: string;
  distortions: Record<string, number>; // family -> 0..5
  quality: number; // 0..4
  importance: number; // 0..4
  timestamp: number;
}

export interface SubmitAck {
  roi_id: string;
  rater_count: number;
}

export interface ProgressInfo {
  total_rois: number;
  finalized: number;
  target_raters: number;
  per_roi: Record<string, number>;
}

export const DISTORTION_TYPES = [
  'exposure',
  'noise',
  'blur',
  'contrast',
  'colorfulness',
  'compression',
] as const;
