/** Session state machine over the review API.
 *
 * All rating state of record lives on the server; this class holds the
 * rater's place in the protocol (current assignment, plane, slice,
 * window) plus locally staged slider scores that are not yet
 * acknowledged. Reload-safety follows from that split: a fresh machine
 * asking for the next assignment resumes exactly where the server says.
 */

import {
  ApiError,
  Assignment,
  NextResponse,
  Plane,
  RatingBand,
  ReviewApi,
  WindowPreset,
} from "./api.js";

export type Phase = "loading" | "rating" | "completed" | "error";

export interface StateSnapshot {
  phase: Phase;
  assignment: Assignment | null;
  plane: Plane;
  sliceIndex: number;
  wc: number;
  ww: number;
  scores: ReadonlyMap<number, number>;
  submitted: ReadonlySet<number>;
  error: string | null;
}

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

export function bandForScore(bands: readonly RatingBand[], score: number): RatingBand {
  if (score < 0 || score > 100) throw new RangeError(`score ${score} outside [0, 100]`);
  for (const b of bands) {
    if (score <= b.hi) return b;
  }
  return bands[bands.length - 1]!;
}

export class SessionState {
  phase: Phase = "loading";
  assignment: Assignment | null = null;
  plane: Plane = "axial";
  sliceIndex = 0;
  wc = 40;
  ww = 400;
  /** slider value per level id: staged locally, kept after submission */
  readonly scores = new Map<number, number>();
  /** level ids the server has acknowledged for the current assignment */
  readonly submitted = new Set<number>();
  error: string | null = null;
  /** what failed last, so the retry affordance can repeat it */
  private lastAction: (() => Promise<void>) | null = null;
  private listeners: Array<(s: SessionState) => void> = [];

  constructor(
    private readonly api: ReviewApi,
    readonly rater: string,
    private readonly now: () => number = () => Date.now(),
  ) {}

  onChange(fn: (s: SessionState) => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn(this);
  }

  // -- protocol flow ------------------------------------------------------

  async start(): Promise<void> {
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    this.phase = "loading";
    this.error = null;
    this.notify();
    const action = async () => {
      const next: NextResponse = await this.api.nextAssignment(this.rater);
      if (next.completed) {
        this.assignment = null;
        this.phase = "completed";
      } else {
        this.assignment = next;
        this.scores.clear();
        this.submitted.clear();
        for (const id of next.rated_levels) this.submitted.add(id);
        this.sliceIndex = clamp(
          Math.floor(next.planes[this.plane] / 2),
          0,
          next.planes[this.plane] - 1,
        );
        this.caseStartedAt = this.now();
        this.phase = "rating";
      }
      this.error = null;
      this.notify();
    };
    await this.run(action);
  }

  private caseStartedAt = 0;

  private async run(action: () => Promise<void>): Promise<void> {
    this.lastAction = action;
    try {
      await action();
    } catch (err) {
      this.phase = this.assignment ? "rating" : "error";
      this.error = err instanceof ApiError ? err.message : String(err);
      this.notify();
    }
  }

  /** Re-issue whatever failed last; staged scores are untouched. */
  async retry(): Promise<void> {
    if (this.lastAction) await this.run(this.lastAction);
  }

  // -- viewer -------------------------------------------------------------

  get sliceCount(): number {
    return this.assignment ? this.assignment.planes[this.plane] : 0;
  }

  setSlice(index: number): void {
    if (!this.assignment) return;
    this.sliceIndex = clamp(index, 0, this.sliceCount - 1);
    this.notify();
  }

  scrollBy(delta: number): void {
    this.setSlice(this.sliceIndex + delta);
  }

  /** Switching plane re-clamps the slice but keeps window center/width. */
  setPlane(plane: Plane): void {
    if (!this.assignment) return;
    this.plane = plane;
    this.sliceIndex = clamp(this.sliceIndex, 0, this.sliceCount - 1);
    this.notify();
  }

  setWindow(wc: number, ww: number): void {
    if (!(ww > 0)) throw new RangeError(`window width must be positive, got ${ww}`);
    this.wc = wc;
    this.ww = ww;
    this.notify();
  }

  applyPreset(preset: WindowPreset): void {
    this.setWindow(preset.wc, preset.ww);
  }

  renderUrl(): string {
    if (!this.assignment) return "";
    return this.api.renderUrl(
      this.assignment.token,
      this.plane,
      this.sliceIndex,
      this.wc,
      this.ww,
    );
  }

  // -- rating -------------------------------------------------------------

  stageScore(levelId: number, score: number): void {
    if (!this.assignment) throw new Error("no active assignment");
    if (!this.assignment.levels.some((l) => l.id === levelId)) {
      throw new RangeError(`unknown level id ${levelId}`);
    }
    this.scores.set(levelId, clamp(Math.round(score), 0, 100));
    this.notify();
  }

  bandFor(levelId: number): RatingBand | null {
    const score = this.scores.get(levelId);
    if (score === undefined || !this.assignment) return null;
    return bandForScore(this.assignment.rating_bands, score);
  }

  get allSubmitted(): boolean {
    if (!this.assignment) return false;
    return this.assignment.levels.every((l) => this.submitted.has(l.id));
  }

  /**
   * Submit one staged score. On success the level is marked submitted and,
   * once every level is, the session auto-advances. On rejection the score
   * stays staged and the error is surfaced for the retry affordance.
   */
  async submitLevel(levelId: number): Promise<void> {
    const assignment = this.assignment;
    if (!assignment) throw new Error("no active assignment");
    const score = this.scores.get(levelId);
    if (score === undefined) throw new Error(`no staged score for level ${levelId}`);
    await this.run(async () => {
      await this.api.submitRating({
        rater: this.rater,
        token: assignment.token,
        level_id: levelId,
        score,
        time_on_case_s: (this.now() - this.caseStartedAt) / 1000,
      });
      this.submitted.add(levelId);
      this.error = null;
      this.notify();
      if (this.allSubmitted) await this.loadNext();
    });
  }

  snapshot(): StateSnapshot {
    return {
      phase: this.phase,
      assignment: this.assignment,
      plane: this.plane,
      sliceIndex: this.sliceIndex,
      wc: this.wc,
      ww: this.ww,
      scores: this.scores,
      submitted: this.submitted,
      error: this.error,
    };
  }
}
