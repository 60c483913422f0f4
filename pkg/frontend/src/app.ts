/** DOM shell around the session state machine.
 *
 * Everything the rater sees comes from the API payloads: level names and
 * legend colors, rating-band captions, window presets, slice counts. The
 * shell stays free of any knowledge about cases or contour sets.
 */

import { Plane, ReviewApi } from "./api.js";
import { SessionState, bandForScore } from "./state.js";

const PLANES: Plane[] = ["axial", "coronal", "sagittal"];

const BAND_SHADES = ["#f4c7c3", "#fce8b2", "#d5e8d4", "#b7d7f4"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function bandGradient(): string {
  const stops = BAND_SHADES.map(
    (c, i) => `${c} ${i * 25}%, ${c} ${(i + 1) * 25}%`,
  ).join(", ");
  return `linear-gradient(to right, ${stops})`;
}

export class ReviewApp {
  readonly state: SessionState;
  private readonly root: HTMLElement;

  constructor(root: HTMLElement, api: ReviewApi, rater: string) {
    this.root = root;
    this.state = new SessionState(api, rater);
    this.state.onChange(() => this.render());
  }

  async start(): Promise<void> {
    await this.state.start();
  }

  // -- rendering ------------------------------------------------------------

  private render(): void {
    const s = this.state;
    this.root.textContent = "";
    if (s.phase === "loading") {
      this.root.append(el("p", { "data-testid": "loading" }, "loading..."));
      return;
    }
    if (s.phase === "completed") {
      const done = el("div", { "data-testid": "completed" });
      done.append(
        el("h1", {}, "Session complete"),
        el("p", {}, "Every assignment has been rated. Thank you."),
      );
      this.root.append(done);
      return;
    }
    if (s.phase === "error" || !s.assignment) {
      this.root.append(this.errorBar(s.error ?? "unknown error"));
      return;
    }

    const a = s.assignment;
    const header = el("header", {});
    header.append(
      el(
        "span",
        { "data-testid": "progress" },
        `assignment ${a.position} of ${a.total}`,
      ),
      el(
        "span",
        { "data-testid": "submitted-count" },
        ` - ${s.submitted.size}/${a.levels.length} levels rated`,
      ),
    );
    this.root.append(header);
    if (s.error) this.root.append(this.errorBar(s.error));
    this.root.append(this.viewer(), this.levelPanel());
  }

  private errorBar(message: string): HTMLElement {
    const bar = el("div", { "data-testid": "error", role: "alert" });
    bar.append(el("span", {}, message));
    const retry = el("button", { "data-testid": "retry" }, "retry");
    retry.addEventListener("click", () => void this.state.retry());
    bar.append(retry);
    return bar;
  }

  private viewer(): HTMLElement {
    const s = this.state;
    const a = s.assignment!;
    const box = el("section", { "data-testid": "viewer", tabindex: "0" });

    const planeBar = el("div", { role: "group", "aria-label": "plane" });
    for (const plane of PLANES) {
      const b = el(
        "button",
        {
          "data-testid": `plane-${plane}`,
          "aria-pressed": String(plane === s.plane),
        },
        plane,
      );
      b.addEventListener("click", () => s.setPlane(plane));
      planeBar.append(b);
    }
    box.append(planeBar);

    const presetBar = el("div", { role: "group", "aria-label": "window presets" });
    for (const p of a.window_presets) {
      const b = el("button", { "data-testid": `preset-${p.name}` }, p.name);
      b.addEventListener("click", () => s.applyPreset(p));
      presetBar.append(b);
    }
    box.append(presetBar);

    const img = el("img", {
      "data-testid": "slice",
      alt: `${s.plane} slice ${s.sliceIndex + 1} of ${s.sliceCount}`,
      src: s.renderUrl(),
      draggable: "false",
    });
    img.addEventListener("error", () => {
      this.state.error = "slice failed to load";
      this.render();
    });
    box.append(img);

    box.append(
      el(
        "span",
        { "data-testid": "slice-indicator" },
        `${s.plane} ${s.sliceIndex + 1}/${s.sliceCount}  wc ${s.wc} ww ${s.ww}`,
      ),
    );

    box.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      s.scrollBy(ev.deltaY > 0 ? 1 : -1);
    });
    box.addEventListener("keydown", (ev) => {
      if ((ev.target as HTMLElement).tagName === "INPUT") return; // sliders own their keys
      if (ev.key === "ArrowUp" || ev.key === "ArrowRight") {
        ev.preventDefault();
        s.scrollBy(1);
      } else if (ev.key === "ArrowDown" || ev.key === "ArrowLeft") {
        ev.preventDefault();
        s.scrollBy(-1);
      }
    });
    return box;
  }

  private levelPanel(): HTMLElement {
    const s = this.state;
    const a = s.assignment!;
    const panel = el("section", { "data-testid": "levels" });
    for (const level of a.levels) {
      const row = el("div", { "data-testid": `level-${level.id}` });
      const swatch = el("span", {
        "data-testid": `swatch-${level.id}`,
        "data-color": level.color,
        "aria-hidden": "true",
      });
      swatch.style.background = level.color;
      row.append(swatch, el("label", { for: `score-${level.id}` }, level.name));

      const staged = s.scores.get(level.id);
      const slider = el("input", {
        type: "range",
        id: `score-${level.id}`,
        "data-testid": `slider-${level.id}`,
        min: "0",
        max: "100",
        step: "1",
        value: String(staged ?? 50),
      });
      slider.style.background = bandGradient();
      slider.addEventListener("input", () => {
        s.stageScore(level.id, Number(slider.value));
      });
      row.append(slider);

      const caption = el("span", { "data-testid": `caption-${level.id}` });
      caption.textContent =
        staged === undefined
          ? "move the slider to rate"
          : `${staged} - ${bandForScore(a.rating_bands, staged).caption}`;
      row.append(caption);

      const submit = el(
        "button",
        { "data-testid": `submit-${level.id}` },
        s.submitted.has(level.id) ? "re-rate" : "rate",
      );
      submit.disabled = staged === undefined;
      submit.addEventListener("click", () => void s.submitLevel(level.id));
      row.append(submit);

      if (s.submitted.has(level.id)) {
        row.append(el("span", { "data-testid": `saved-${level.id}` }, "saved"));
      }
      panel.append(row);
    }
    return panel;
  }
}

/** Entry point for the static page: ?api=http://host:port&rater=name */
export function boot(root: HTMLElement): ReviewApp {
  const params = new URLSearchParams(window.location.search);
  const api = new ReviewApi(params.get("api") ?? window.location.origin);
  const rater = params.get("rater") ?? "";
  if (!rater) {
    root.textContent = "missing ?rater= query parameter";
    throw new Error("missing rater");
  }
  const app = new ReviewApp(root, api, rater);
  void app.start();
  return app;
}
