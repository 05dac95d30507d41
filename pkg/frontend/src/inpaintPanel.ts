// Inpaint controls: an overlay the user scribbles on, a region prompt, and
// apply/clear. The overlay buffer lives at exact canvas resolution so the
// uploaded mask bits match what was painted, pixel for pixel.

import { ApiClient, ApiError } from "./api.js";
import { MaskPainter, StrokePoint } from "./brush.js";
import { bytesToBase64, encodeMaskPng } from "./maskPng.js";
import type { NodeDoc } from "./types.js";

export interface InpaintCallbacks {
  onChildCreated?: (node: NodeDoc) => void;
}

export class InpaintPanel {
  readonly root: HTMLElement;
  readonly painter: MaskPainter;
  private readonly api: ApiClient;
  private readonly callbacks: InpaintCallbacks;
  private readonly overlay: HTMLCanvasElement;
  private readonly prompt: HTMLInputElement;
  private readonly apply: HTMLButtonElement;
  private readonly clear: HTMLButtonElement;
  private readonly notice: HTMLElement;
  private node: NodeDoc | null = null;
  private stroke: StrokePoint[] | null = null;

  constructor(
    root: HTMLElement,
    api: ApiClient,
    width: number,
    height: number,
    callbacks: InpaintCallbacks = {}
  ) {
    this.root = root;
    this.api = api;
    this.callbacks = callbacks;
    this.painter = new MaskPainter(width, height);
    root.classList.add("inpaint-panel");

    this.overlay = document.createElement("canvas");
    this.overlay.className = "mask-overlay";
    this.overlay.width = width;
    this.overlay.height = height;

    this.prompt = document.createElement("input");
    this.prompt.type = "text";
    this.prompt.placeholder = "Region prompt";

    this.apply = document.createElement("button");
    this.apply.type = "button";
    this.apply.textContent = "Apply";
    this.apply.disabled = true;

    this.clear = document.createElement("button");
    this.clear.type = "button";
    this.clear.textContent = "Clear";

    this.notice = document.createElement("div");
    this.notice.className = "inpaint-notice";
    this.notice.hidden = true;

    root.append(this.overlay, this.prompt, this.apply, this.clear, this.notice);

    this.overlay.addEventListener("pointerdown", (e) =>
      this.beginStroke(e.offsetX, e.offsetY)
    );
    this.overlay.addEventListener("pointermove", (e) =>
      this.extendStroke(e.offsetX, e.offsetY)
    );
    this.overlay.addEventListener("pointerup", () => this.endStroke());
    this.apply.addEventListener("click", () => void this.submit());
    this.clear.addEventListener("click", () => this.clearMask());
  }

  setNode(node: NodeDoc): void {
    this.node = node;
    const editable = node.status === "completed";
    this.overlay.style.pointerEvents = editable ? "auto" : "none";
    this.refreshControls();
  }

  beginStroke(x: number, y: number): void {
    this.stroke = [{ x, y }];
  }

  extendStroke(x: number, y: number): void {
    if (this.stroke !== null) this.stroke.push({ x, y });
  }

  endStroke(): void {
    if (this.stroke === null) return;
    this.painter.paintStroke(this.stroke);
    this.stroke = null;
    this.refreshControls();
  }

  clearMask(): void {
    this.painter.clear();
    this.refreshControls();
  }

  private refreshControls(): void {
    const empty = this.painter.isEmpty();
    this.apply.disabled =
      empty || this.node === null || this.node.status !== "completed";
    this.notice.hidden = true;
  }

  private async submit(): Promise<void> {
    if (this.node === null) return;
    if (this.painter.isEmpty()) {
      this.notice.textContent = "Paint a region first.";
      this.notice.hidden = false;
      return;
    }
    const png = encodeMaskPng(
      this.painter.width,
      this.painter.height,
      this.painter.bits()
    );
    try {
      const child = await this.api.inpaint(
        this.node.id,
        bytesToBase64(png),
        this.prompt.value.trim()
      );
      this.clearMask();
      this.callbacks.onChildCreated?.(child);
    } catch (err) {
      this.notice.textContent =
        err instanceof ApiError ? err.message : "inpaint failed";
      this.notice.hidden = false;
    }
  }
}
