// Branch manager: renders the version tree with stage-colored nodes, lets
// the user activate any node, and opens a side-by-side compare of two
// selected completed nodes.

import { ApiClient, ApiError } from "./api.js";
import type { CompareDoc, NodeDoc, TreeDoc } from "./types.js";

export interface BranchTreeCallbacks {
  onActivated?: (nodeId: string) => void;
}

export class BranchTreeView {
  readonly root: HTMLElement;
  private readonly api: ApiClient;
  private readonly callbacks: BranchTreeCallbacks;
  private readonly list: HTMLElement;
  private readonly compareRegion: HTMLElement;
  private readonly message: HTMLElement;
  private tree: TreeDoc | null = null;
  private selected: string[] = [];

  constructor(
    root: HTMLElement,
    api: ApiClient,
    callbacks: BranchTreeCallbacks = {}
  ) {
    this.root = root;
    this.api = api;
    this.callbacks = callbacks;
    root.classList.add("branch-tree");

    this.list = document.createElement("ul");
    this.list.className = "tree-nodes";
    this.message = document.createElement("div");
    this.message.className = "tree-message";
    this.message.hidden = true;
    this.compareRegion = document.createElement("div");
    this.compareRegion.className = "compare-view";
    this.compareRegion.hidden = true;

    root.append(this.list, this.message, this.compareRegion);
  }

  get currentTree(): TreeDoc | null {
    return this.tree;
  }

  render(tree: TreeDoc): void {
    this.tree = tree;
    this.selected = this.selected.filter((id) =>
      tree.nodes.some((n) => n.id === id)
    );
    const children = new Map<string, string[]>();
    for (const [parent, child] of tree.edges) {
      const bucket = children.get(parent) ?? [];
      bucket.push(child);
      children.set(parent, bucket);
    }
    const byId = new Map(tree.nodes.map((n) => [n.id, n]));
    this.list.replaceChildren();
    const renderBranch = (nodeId: string, depth: number): void => {
      const node = byId.get(nodeId);
      if (node === undefined) return;
      this.list.appendChild(this.renderNode(node, depth));
      for (const child of children.get(nodeId) ?? []) {
        renderBranch(child, depth + 1);
      }
    };
    renderBranch(tree.project.root_node, 0);
  }

  private renderNode(node: NodeDoc, depth: number): HTMLElement {
    const item = document.createElement("li");
    item.className = `tree-node stage-${node.stage} status-${node.status}`;
    item.dataset.nodeId = node.id;
    item.style.marginLeft = `${depth}em`;
    if (this.tree !== null && node.id === this.tree.active) {
      item.classList.add("active");
    }
    if (this.selected.includes(node.id)) {
      item.classList.add("selected");
    }

    const label = document.createElement("span");
    label.className = "tree-label";
    label.textContent = node.label ?? `${node.id} (${node.stage})`;

    const activate = document.createElement("button");
    activate.type = "button";
    activate.className = "tree-activate";
    activate.textContent = "activate";
    activate.addEventListener("click", () => void this.activate(node.id));

    const select = document.createElement("button");
    select.type = "button";
    select.className = "tree-select";
    select.textContent = "compare";
    select.addEventListener("click", () => void this.toggleSelect(node));

    item.append(label, activate, select);
    return item;
  }

  private async activate(nodeId: string): Promise<void> {
    if (this.tree === null) return;
    try {
      await this.api.activate(this.tree.project.id, nodeId);
      this.render(await this.api.getTree(this.tree.project.id));
      this.callbacks.onActivated?.(nodeId);
    } catch (err) {
      this.showMessage(
        err instanceof ApiError ? err.message : "activation failed"
      );
    }
  }

  private async toggleSelect(node: NodeDoc): Promise<void> {
    if (node.status !== "completed") {
      this.showMessage("only completed versions can be compared");
      return;
    }
    const index = this.selected.indexOf(node.id);
    if (index !== -1) {
      this.selected.splice(index, 1);
    } else {
      this.selected.push(node.id);
      if (this.selected.length > 2) this.selected.shift();
    }
    if (this.tree !== null) this.render(this.tree);
    if (this.selected.length === 2) {
      await this.showCompare(this.selected[0], this.selected[1]);
    } else {
      this.compareRegion.hidden = true;
    }
  }

  private async showCompare(a: string, b: string): Promise<void> {
    let report: CompareDoc;
    try {
      report = await this.api.compare(a, b);
    } catch (err) {
      this.showMessage(err instanceof ApiError ? err.message : "compare failed");
      return;
    }
    this.compareRegion.replaceChildren();

    const panes = document.createElement("div");
    panes.className = "compare-panes";
    for (const [nodeId, digest, prompt] of [
      [report.node_a, report.digest_a, report.prompt_a],
      [report.node_b, report.digest_b, report.prompt_b],
    ] as const) {
      const pane = document.createElement("figure");
      pane.className = "compare-pane";
      const img = document.createElement("img");
      img.src = this.api.blobUrl(digest);
      img.alt = nodeId;
      const caption = document.createElement("figcaption");
      caption.textContent = `${nodeId}: ${prompt}`;
      pane.append(img, caption);
      panes.appendChild(pane);
    }

    const badge = document.createElement("span");
    badge.className = "diff-badge";
    badge.textContent = `${report.pixel_diff_count} pixels differ`;

    const diff = document.createElement("p");
    diff.className = "prompt-diff";
    diff.textContent =
      `removed: ${report.prompt_diff.removed.join(", ") || "—"} · ` +
      `added: ${report.prompt_diff.added.join(", ") || "—"}`;

    this.compareRegion.append(panes, badge, diff);
    this.compareRegion.hidden = false;
  }

  private showMessage(text: string): void {
    this.message.textContent = text;
    this.message.hidden = false;
  }
}
