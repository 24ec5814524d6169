/**
 * Thin typed client over the annotation service HTTP API.
 */

import type { ProgressInfo, RatingPayload, RoiPayload, RoiTask, SubmitAck } from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function readError(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { error?: string };
    return body.error ?? resp.statusText;
  } catch {
    return resp.statusText;
  }
}

export class ApiClient {
  constructor(private baseUrl: string = '') {}

  async nextTask(annotator: string): Promise<RoiTask | null> {
    const resp = await fetch(
      `${this.baseUrl}/api/tasks/next?annotator=${encodeURIComponent(annotator)}`,
    );
    if (!resp.ok) throw new ApiError(resp.status, await readError(resp));
    const body = (await resp.json()) as { task: RoiTask | null };
    return body.task;
  }

  async getRoi(roiId: string): Promise<RoiPayload> {
    const resp = await fetch(`${this.baseUrl}/api/rois/${encodeURIComponent(roiId)}`);
    if (!resp.ok) throw new ApiError(resp.status, await readError(resp));
    return (await resp.json()) as RoiPayload;
  }

  async submitRating(payload: RatingPayload): Promise<SubmitAck> {
    const resp = await fetch(`${this.baseUrl}/api/ratings`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
    });
    if (!resp.ok) throw new ApiError(resp.status, await readError(resp));
    return (await resp.json()) as SubmitAck;
  }

  async progress(): Promise<ProgressInfo> {
    const resp = await fetch(`${this.baseUrl}/api/progress`);
    if (!resp.ok) throw new ApiError(resp.status, await readError(resp));
    return (await resp.json()) as ProgressInfo;
  }
}
