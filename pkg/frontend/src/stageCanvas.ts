// Canvas view: shows the currently active node's image with the four-phase
// stage indicator, and swaps images in as completion events arrive.

import type { ApiClient } from "./api.js";
import type { NodeDoc, Stage } from "./types.js";
import { STAGE_ORDER } from "./types.js";

const STAGE_TITLES: Record<Stage, string> = {
  rough: "Rough",
  line: "Line",
  color: "Color",
  finish: "Finish",
};

export class StageCanvasView {
  readonly root: HTMLElement;
  private readonly api: ApiClient;
  private readonly badges: HTMLElement;
  private readonly image: HTMLImageElement;
  private readonly status: HTMLElement;
  private readonly connection: HTMLElement;
  private node: NodeDoc | null = null;

  constructor(root: HTMLElement, api: ApiClient) {
    this.root = root;
    this.api = api;
    root.classList.add("stage-canvas");

    this.badges = document.createElement("div");
    this.badges.className = "stage-badges";
    for (const stage of STAGE_ORDER) {
      const badge = document.createElement("span");
      badge.className = "stage-badge";
      badge.dataset.stage = stage;
      badge.textContent = STAGE_TITLES[stage];
      this.badges.appendChild(badge);
    }

    this.image = document.createElement("img");
    this.image.className = "node-image";
    this.image.alt = "";

    this.status = document.createElement("div");
    this.status.className = "node-status";

    this.connection = document.createElement("div");
    this.connection.className = "connection-state";
    this.connection.hidden = true;

    root.append(this.badges, this.image, this.status, this.connection);
  }

  get currentNode(): NodeDoc | null {
    return this.node;
  }

  showNode(node: NodeDoc): void {
    this.node = node;
    for (const badge of Array.from(
      this.badges.querySelectorAll<HTMLElement>(".stage-badge")
    )) {
      badge.classList.toggle("current", badge.dataset.stage === node.stage);
    }
    this.status.textContent = `${node.id} · ${node.status}`;
    if (node.image !== null) {
      this.image.src = this.api.blobUrl(node.image);
      this.image.dataset.digest = node.image;
      this.image.hidden = false;
    } else {
      this.image.removeAttribute("src");
      delete this.image.dataset.digest;
      this.image.hidden = true;
    }
  }

  /** Refresh from the server when the shown node finishes generating. */
  async onNodeCompleted(nodeId: string): Promise<void> {
    if (this.node !== null && this.node.id === nodeId) {
      this.showNode(await this.api.getNode(nodeId));
    }
  }

  setConnectionState(state: string): void {
    const visible = state === "reconnecting" || state === "connecting";
    this.connection.hidden = !visible;
    this.connection.textContent = visible ? `stream ${state}…` : "";
  }
}
