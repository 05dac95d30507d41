// Application shell: one project open at a time, one event-stream
// subscription, and every view rebuilt purely from API responses so a hard
// reload loses nothing.

import { ApiClient } from "./api.js";
import { BranchTreeView } from "./branchTree.js";
import { ChatPaneView } from "./chatPane.js";
import { EventStream } from "./events.js";
import { InpaintPanel } from "./inpaintPanel.js";
import { StageCanvasView } from "./stageCanvas.js";
import type { EventDoc, ExchangeDoc, TreeDoc } from "./types.js";

export class App {
  readonly api: ApiClient;
  readonly canvas: StageCanvasView;
  readonly chat: ChatPaneView;
  readonly tree: BranchTreeView;
  readonly inpaint: InpaintPanel;
  private readonly projectId: string;
  private stream: EventStream | null = null;

  private constructor(
    root: HTMLElement,
    api: ApiClient,
    projectId: string,
    width: number,
    height: number
  ) {
    this.api = api;
    this.projectId = projectId;

    const canvasRoot = document.createElement("section");
    canvasRoot.id = "canvas-pane";
    const inpaintRoot = document.createElement("section");
    inpaintRoot.id = "inpaint-pane";
    const treeRoot = document.createElement("aside");
    treeRoot.id = "tree-pane";
    const chatRoot = document.createElement("aside");
    chatRoot.id = "chat-pane"; // right-hand side in the stylesheet
    root.append(treeRoot, canvasRoot, inpaintRoot, chatRoot);

    this.canvas = new StageCanvasView(canvasRoot, api);
    this.chat = new ChatPaneView(chatRoot, api);
    this.inpaint = new InpaintPanel(inpaintRoot, api, width, height, {
      onChildCreated: (node) => {
        void this.api.generate(node.id).catch(() => undefined);
        void this.refreshTree();
      },
    });
    this.tree = new BranchTreeView(treeRoot, api, {
      onActivated: (nodeId) => void this.showActive(nodeId),
    });
  }

  /** Build the whole UI from server state; safe to call after a reload. */
  static async load(
    root: HTMLElement,
    api: ApiClient,
    projectId: string
  ): Promise<App> {
    const project = await api.getProject(projectId);
    const app = new App(root, api, projectId, project.width, project.height);
    await app.refresh();
    return app;
  }

  /** Re-derive every view from the API (tree, active node, chat history). */
  async refresh(): Promise<void> {
    const tree = await this.refreshTree();
    await this.showActive(tree.active);
    const backlog = await this.api.getEventBacklog(this.projectId);
    this.chat.setExchanges(
      backlog
        .filter((e) => e.kind === "tutor_asked")
        .map((e) => e.payload as unknown as ExchangeDoc)
    );
  }

  private async refreshTree(): Promise<TreeDoc> {
    const tree = await this.api.getTree(this.projectId);
    this.tree.render(tree);
    return tree;
  }

  private async showActive(nodeId: string): Promise<void> {
    const node = await this.api.getNode(nodeId);
    this.canvas.showNode(node);
    this.inpaint.setNode(node);
    this.chat.setActiveNode(node.id);
  }

  startStream(): void {
    this.stream = new EventStream(this.api.baseUrl, this.projectId, {
      onEvent: (event) => void this.handleEvent(event),
      onStatus: (status) => this.canvas.setConnectionState(status),
    });
    this.stream.start();
  }

  stopStream(): void {
    this.stream?.stop();
    this.stream = null;
  }

  private async handleEvent(event: EventDoc): Promise<void> {
    switch (event.kind) {
      case "node_completed":
      case "node_failed": {
        const nodeId = event.payload["node_id"] as string;
        await this.canvas.onNodeCompleted(nodeId);
        const shown = this.canvas.currentNode;
        if (shown !== null && shown.id === nodeId) {
          this.inpaint.setNode(shown);
        }
        await this.refreshTree();
        break;
      }
      case "node_created":
      case "activated":
      case "node_labeled": {
        const tree = await this.refreshTree();
        if (event.kind === "activated") await this.showActive(tree.active);
        break;
      }
      case "tutor_asked":
        this.chat.appendExchange(event.payload as unknown as ExchangeDoc);
        break;
      default:
        break;
    }
  }
}

export async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (root === null) return;
  const api = new ApiClient("");
  const params = new URLSearchParams(window.location.search);
  let projectId = params.get("project");
  if (projectId === null) {
    const project = await api.createProject("untitled illustration");
    projectId = project.id;
    const url = new URL(window.location.href);
    url.searchParams.set("project", projectId);
    window.history.replaceState(null, "", url.toString());
  }
  const app = await App.load(root, api, projectId);
  app.startStream();
}

if (typeof document !== "undefined" && document.getElementById("app") !== null) {
  void boot();
}
