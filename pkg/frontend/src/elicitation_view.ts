/**
 * Expert view: three sliders (lower / most plausible / upper, out of 100),
 * a live density curve from GET /preview, and a submit button that enables
 * only when the ordering invariant holds.
 */

import { ApiClient, ApiError, PreviewPayload } from "./api.js";
import { densityCurve, tripletMarkers } from "./charts.js";
import { debounce } from "./debounce.js";
import { ClientSubmissionDraft, submitEnabled } from "./state.js";

const PREVIEW_DEBOUNCE_MS = 150;
const CURVE_W = 640;
const CURVE_H = 240;

export class ElicitationView {
  readonly root: HTMLElement;
  private draft: ClientSubmissionDraft;
  private readonly sliders: Record<"lower" | "mode" | "upper", HTMLInputElement>;
  private readonly curvePath: SVGPathElement;
  private readonly markers: Record<"lower" | "mode" | "upper", SVGLineElement>;
  private readonly submitButton: HTMLButtonElement;
  private readonly status: HTMLElement;
  private readonly requestPreview: { (): void; cancel(): void };
  private lastPreview: PreviewPayload | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly sessionId: string,
    round: number,
    arm: "high" | "low",
  ) {
    this.draft = { lower: 1, mode: 7, upper: 40, arm, round };
    this.root = document.createElement("section");
    this.root.className = "elicitation-view";
    this.root.innerHTML = `
      <h2>Out of 100 similar patients, how many will revisit?</h2>
      <svg class="curve" viewBox="0 0 ${CURVE_W} ${CURVE_H}" width="${CURVE_W}" height="${CURVE_H}">
        <path class="density" fill="none" stroke="#2a6f97" stroke-width="2"></path>
        <line class="marker lower" stroke="#888" stroke-dasharray="4 3" y1="0" y2="${CURVE_H}"></line>
        <line class="marker mode" stroke="#d1495b" y1="0" y2="${CURVE_H}"></line>
        <line class="marker upper" stroke="#888" stroke-dasharray="4 3" y1="0" y2="${CURVE_H}"></line>
      </svg>
      <div class="sliders"></div>
      <button class="submit" disabled>Submit</button>
      <p class="status" role="status"></p>
    `;
    this.curvePath = this.root.querySelector("path.density") as SVGPathElement;
    this.markers = {
      lower: this.root.querySelector("line.lower") as SVGLineElement,
      mode: this.root.querySelector("line.mode") as SVGLineElement,
      upper: this.root.querySelector("line.upper") as SVGLineElement,
    };
    this.submitButton = this.root.querySelector("button.submit") as HTMLButtonElement;
    this.status = this.root.querySelector("p.status") as HTMLElement;

    const sliderBox = this.root.querySelector("div.sliders") as HTMLElement;
    this.sliders = {
      lower: this.addSlider(sliderBox, "Lower plausible", "lower"),
      mode: this.addSlider(sliderBox, "Most plausible", "mode"),
      upper: this.addSlider(sliderBox, "Upper plausible", "upper"),
    };

    this.requestPreview = debounce(() => void this.refreshPreview(), PREVIEW_DEBOUNCE_MS);
    this.submitButton.addEventListener("click", () => void this.submit());
    this.syncControls();
    this.requestPreview();
  }

  private addSlider(
    parent: HTMLElement,
    label: string,
    key: "lower" | "mode" | "upper",
  ): HTMLInputElement {
    const row = document.createElement("label");
    row.className = `slider-row ${key}`;
    row.innerHTML = `<span>${label}</span>
      <input type="range" min="0" max="100" step="1">
      <output></output>`;
    const input = row.querySelector("input") as HTMLInputElement;
    input.addEventListener("input", () => {
      this.draft = { ...this.draft, [key]: Number(input.value) };
      this.syncControls();
      this.requestPreview();
    });
    parent.appendChild(row);
    return input;
  }

  get currentDraft(): ClientSubmissionDraft {
    return this.draft;
  }

  private syncControls(): void {
    for (const key of ["lower", "mode", "upper"] as const) {
      this.sliders[key].value = String(this.draft[key]);
      const output = this.sliders[key].parentElement?.querySelector("output");
      if (output) output.textContent = `${this.draft[key]}`;
    }
    this.submitButton.disabled = !submitEnabled(this.draft);
    const m = tripletMarkers(this.draft.lower, this.draft.mode, this.draft.upper, CURVE_W);
    this.markers.lower.setAttribute("x1", String(m.lowerPx));
    this.markers.lower.setAttribute("x2", String(m.lowerPx));
    this.markers.mode.setAttribute("x1", String(m.modePx));
    this.markers.mode.setAttribute("x2", String(m.modePx));
    this.markers.upper.setAttribute("x1", String(m.upperPx));
    this.markers.upper.setAttribute("x2", String(m.upperPx));
  }

  private async refreshPreview(): Promise<void> {
    if (!submitEnabled(this.draft)) {
      this.status.textContent = "Pick lower < most plausible < upper.";
      return;
    }
    try {
      const payload = await this.api.preview(this.draft);
      this.lastPreview = payload;
      const render = densityCurve(payload.density_grid, CURVE_W, CURVE_H);
      this.curvePath.setAttribute("d", render.path);
      const s = payload.summary;
      this.status.textContent =
        `fitted mean ${(s.mean * 100).toFixed(1)} / 100, ` +
        `95% interval coverage residuals ${payload.residuals.lower.toFixed(3)} / ` +
        `${payload.residuals.upper.toFixed(3)}`;
    } catch (err) {
      this.status.textContent = err instanceof ApiError ? `preview failed (${err.status})` : String(err);
    }
  }

  private async submit(): Promise<void> {
    try {
      const echo = await this.api.submit(this.sessionId, this.draft);
      this.status.textContent =
        `submitted round ${echo.round} (${echo.arm}); ` +
        `fitted mean ${(echo.summary.mean * 100).toFixed(1)} / 100`;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.status.textContent = "this round is not open right now";
      } else {
        this.status.textContent = `submit failed: ${String(err)}`;
      }
    }
  }

  /** Exposed for the UI contract: the data the curve was last drawn from. */
  get renderedCurveData(): PreviewPayload["density_grid"] | null {
    return this.lastPreview?.density_grid ?? null;
  }
}
