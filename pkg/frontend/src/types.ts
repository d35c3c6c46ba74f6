/** Wire types for the review service JSON API. */

export type TileStatus = 'untouched' | 'edited' | 'confirmed';

/** Who vouched for a box. Predictions arrive as "model"; submitted
 * corrections must be "human" or "model-confirmed". */
export type BoxSource = 'human' | 'model' | 'model-confirmed';

export interface BoxPayload {
  cx: number;
  cy: number;
  w: number;
  h: number;
  cls: string;
  source: BoxSource;
  confidence: number | null;
}

export interface QueueTile {
  tile_id: string;
  position: number;
  status: TileStatus;
  revision: number;
}

export interface QueueResponse {
  tiles: QueueTile[];
  total: number;
  confirmed: number;
  archived: boolean;
}

export interface TileDetail {
  tile_id: string;
  position: number;
  image: string;
  predictions: BoxPayload[];
  corrections: BoxPayload[] | null;
  revision: number;
  status: TileStatus;
}

export interface CorrectionsRequest {
  revision: number;
  status: 'edited' | 'confirmed';
  boxes: BoxPayload[];
}

export interface CorrectionsResponse {
  tile_id: string;
  revision: number;
  status: TileStatus;
}

export interface MergeResponse {
  version: number;
  merged_tiles: number;
  class_counts: Record<string, number>;
}
