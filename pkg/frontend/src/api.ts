/** Typed client for the blinded review HTTP API. */

export interface LevelMeta {
  id: number;
  name: string;
  /** CSS hex color, e.g. "#2665ff" */
  color: string;
}

export interface RatingBand {
  lo: number;
  hi: number;
  caption: string;
}

export interface WindowPreset {
  name: string;
  wc: number;
  ww: number;
}

export type Plane = "axial" | "coronal" | "sagittal";

export interface Assignment {
  completed: false;
  token: string;
  position: number;
  total: number;
  dims: [number, number, number];
  spacing_mm: [number, number, number];
  planes: Record<Plane, number>;
  levels: LevelMeta[];
  rating_bands: RatingBand[];
  window_presets: WindowPreset[];
  rated_levels: number[];
}

export interface SessionDone {
  completed: true;
  position: number;
  total: number;
}

export type NextResponse = Assignment | SessionDone;

export interface Progress {
  rater: string;
  rated_assignments: number;
  total_assignments: number;
  rated_levels: number;
  total_levels: number;
}

export interface RatingSubmission {
  rater: string;
  token: string;
  level_id: number;
  score: number;
  time_on_case_s: number;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number | null,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...a) => fetch(...a),
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`, null);
    }
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = (await res.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        /* non-JSON error body: keep the status text */
      }
      throw new ApiError(detail, res.status);
    }
    return (await res.json()) as T;
  }

  nextAssignment(rater: string): Promise<NextResponse> {
    return this.request<NextResponse>(`/session/${encodeURIComponent(rater)}/next`);
  }

  progress(rater: string): Promise<Progress> {
    return this.request<Progress>(`/progress/${encodeURIComponent(rater)}`);
  }

  submitRating(body: RatingSubmission): Promise<unknown> {
    return this.request("/rating", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  /** URL of the server-rendered slice; the <img> element does the GET. */
  renderUrl(token: string, plane: Plane, index: number, wc: number, ww: number): string {
    const q = new URLSearchParams({
      token,
      plane,
      index: String(index),
      wc: String(wc),
      ww: String(ww),
    });
    return `${this.baseUrl}/render?${q.toString()}`;
  }
}
