/**
 * Facilitator view: session state, a guarded advance button, and the
 * deidentified boxplot panel per round and arm.
 */

import { ApiClient, ApiError } from "./api.js";
import { boxplotGlyphs } from "./charts.js";

const PANEL_W = 640;
const ROW_H = 28;

export class FacilitatorView {
  readonly root: HTMLElement;
  private readonly stateLabel: HTMLElement;
  private readonly advanceButton: HTMLButtonElement;
  private readonly toast: HTMLElement;
  private readonly panel: SVGSVGElement;
  private knownState = "";

  constructor(
    private readonly api: ApiClient,
    private readonly sessionId: string,
  ) {
    this.root = document.createElement("section");
    this.root.className = "facilitator-view";
    this.root.innerHTML = `
      <h2>Facilitator</h2>
      <p>Session <code>${sessionId}</code> - state <strong class="state"></strong></p>
      <button class="advance">Advance round</button>
      <p class="toast" role="alert"></p>
      <div class="controls">
        <label>Round <select class="round"><option>1</option><option>2</option></select></label>
        <label>Arm <select class="arm"><option value="high">0.60 mg/kg</option><option value="low">0.15 mg/kg</option></select></label>
        <button class="load">Show boxplots</button>
      </div>
      <svg class="boxes" width="${PANEL_W}" height="0"></svg>
    `;
    this.stateLabel = this.root.querySelector(".state") as HTMLElement;
    this.advanceButton = this.root.querySelector("button.advance") as HTMLButtonElement;
    this.toast = this.root.querySelector(".toast") as HTMLElement;
    this.panel = this.root.querySelector("svg.boxes") as SVGSVGElement;
    this.advanceButton.addEventListener("click", () => void this.advance());
    (this.root.querySelector("button.load") as HTMLButtonElement).addEventListener(
      "click",
      () => void this.loadBoxplots(),
    );
    void this.refresh();
  }

  async refresh(): Promise<void> {
    const descriptor = await this.api.descriptor(this.sessionId);
    this.knownState = descriptor.state;
    this.stateLabel.textContent = descriptor.state;
  }

  private async advance(): Promise<void> {
    try {
      // send the state this view believes in: double clicks make the second
      // request stale and it comes back as a 409 instead of double-advancing
      const result = await this.api.advance(this.sessionId, this.knownState);
      this.knownState = result.state;
      this.stateLabel.textContent = result.state;
      this.toast.textContent = "";
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        const payload = err.payload as { detail?: { state?: string } } | null;
        const actual = payload?.detail?.state;
        this.toast.textContent = `state already moved${actual ? ` to ${actual}` : ""}`;
        await this.refresh();
      } else {
        this.toast.textContent = `advance failed: ${String(err)}`;
      }
    }
  }

  private async loadBoxplots(): Promise<void> {
    const round = Number((this.root.querySelector("select.round") as HTMLSelectElement).value);
    const arm = (this.root.querySelector("select.arm") as HTMLSelectElement).value;
    try {
      const payload = await this.api.boxplots(this.sessionId, round, arm);
      const glyphs = boxplotGlyphs(payload.boxplots, PANEL_W, ROW_H);
      this.panel.setAttribute("height", String(glyphs.length * ROW_H));
      this.panel.innerHTML = glyphs
        .map(
          (g) => `
        <g>
          <text x="0" y="${g.y + 4}" font-size="12">${g.label}</text>
          <line x1="${g.whiskerLowPx}" x2="${g.whiskerHighPx}" y1="${g.y}" y2="${g.y}" stroke="#555"></line>
          <rect x="${g.boxLeftPx}" y="${g.y - 8}" width="${Math.max(g.boxRightPx - g.boxLeftPx, 1)}" height="16" fill="#cfe8ff" stroke="#2a6f97"></rect>
          <line x1="${g.medianPx}" x2="${g.medianPx}" y1="${g.y - 8}" y2="${g.y + 8}" stroke="#d1495b" stroke-width="2"></line>
        </g>`,
        )
        .join("");
      this.toast.textContent = "";
    } catch (err) {
      if (err instanceof ApiError) {
        this.toast.textContent = `boxplots unavailable (${err.status})`;
      } else {
        this.toast.textContent = String(err);
      }
    }
  }
}
