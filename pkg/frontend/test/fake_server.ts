/** In-memory stand-in for the review service, exposed as a fetch function.
 *
 * Mirrors the real API shapes: blinded next-assignment payloads, per-level
 * rating submissions with last-wins semantics, completion when every level
 * of every assignment is rated.
 */

import type { Assignment, LevelMeta, RatingBand } from "../src/api.js";

export const BANDS: RatingBand[] = [
  { lo: 0, hi: 25, caption: "complete recontouring of segmentation necessary" },
  { lo: 25, hi: 50, caption: "major manual editing necessary" },
  { lo: 50, hi: 75, caption: "minor manual editing necessary" },
  { lo: 75, hi: 100, caption: "segmentation clinically usable" },
];

export const PRESETS = [
  { name: "soft-tissue", wc: 40, ww: 400 },
  { name: "lung", wc: -600, ww: 1500 },
  { name: "bone", wc: 400, ww: 1800 },
];

export interface FakeServerOptions {
  tokens: string[];
  levels?: LevelMeta[];
  failSubmissions?: number; // reject this many POSTs before accepting
  dims?: [number, number, number];
}

export class FakeServer {
  readonly ratings = new Map<string, Map<number, number>>(); // token -> level -> score
  readonly requests: string[] = [];
  private failRemaining: number;
  private readonly levels: LevelMeta[];
  private readonly tokens: string[];
  private readonly dims: [number, number, number];

  constructor(opts: FakeServerOptions) {
    this.tokens = opts.tokens;
    this.levels = opts.levels ?? [
      { id: 1, name: "Ia", color: "#ff0000" },
      { id: 7, name: "II_left", color: "#00ff00" },
      { id: 9, name: "III_left", color: "#0000ff" },
    ];
    this.failRemaining = opts.failSubmissions ?? 0;
    this.dims = opts.dims ?? [32, 32, 32];
    for (const t of this.tokens) this.ratings.set(t, new Map());
  }

  private json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  }

  private nextPayload(): Assignment | { completed: true; position: number; total: number } {
    const full = (t: string) => this.ratings.get(t)!.size >= this.levels.length;
    const idx = this.tokens.findIndex((t) => !full(t));
    if (idx === -1) {
      return { completed: true, position: this.tokens.length, total: this.tokens.length };
    }
    const [nx, ny, nz] = this.dims;
    return {
      completed: false,
      token: this.tokens[idx]!,
      position: idx + 1,
      total: this.tokens.length,
      dims: this.dims,
      spacing_mm: [1, 1, 3],
      planes: { axial: nz, coronal: ny, sagittal: nx },
      levels: this.levels,
      rating_bands: BANDS,
      window_presets: PRESETS,
      rated_levels: [...this.ratings.get(this.tokens[idx]!)!.keys()].sort((a, b) => a - b),
    };
  }

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input, "http://fake");
    this.requests.push(`${init?.method ?? "GET"} ${url.pathname}${url.search}`);
    if (url.pathname.endsWith("/next")) return this.json(200, this.nextPayload());
    if (url.pathname === "/rating") {
      if (this.failRemaining > 0) {
        this.failRemaining -= 1;
        return this.json(503, { detail: "simulated outage" });
      }
      const body = JSON.parse(String(init?.body)) as {
        token: string;
        level_id: number;
        score: number;
      };
      if (body.score < 0 || body.score > 100) {
        return this.json(400, { detail: "score outside [0, 100]" });
      }
      const perToken = this.ratings.get(body.token);
      if (!perToken) return this.json(404, { detail: "unknown token" });
      perToken.set(body.level_id, body.score);
      return this.json(200, { status: "recorded" });
    }
    return this.json(404, { detail: `no route ${url.pathname}` });
  };
}
