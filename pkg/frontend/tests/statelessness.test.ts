// UI statelessness: after a scripted session against a real server, the
// interface is mounted twice into fresh documents (simulating a hard
// reload). Both mounts must reproduce the canvas, chat history, and tree
// purely from API responses, with no carried-over client state.

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { Window } from "happy-dom";
import { App } from "../src/main.js";
import { TestServer, startServer, waitCompleted } from "./helpers.js";
import type { ExchangeDoc, TreeDoc } from "../src/types.js";

const SIZE = 32;

interface SessionResult {
  projectId: string;
  tree: TreeDoc;
  exchanges: ExchangeDoc[];
}

async function runScriptedSession(server: TestServer): Promise<SessionResult> {
  const api = server.api;
  const project = await api.createProject("stateless fox", {
    width: SIZE,
    height: SIZE,
    seed: 3,
  });
  await api.generate(project.root_node);
  await waitCompleted(api, project.root_node);

  const line = await api.advance(project.root_node, "bold outlines", 4);
  await api.generate(line.id);
  await waitCompleted(api, line.id);

  const colorA = await api.advance(line.id, "autumn palette", 5);
  await api.generate(colorA.id);
  await waitCompleted(api, colorA.id);

  const colorB = await api.regenerate(colorA.id, { seed: 6 });
  await api.generate(colorB.id);
  await waitCompleted(api, colorB.id);

  const ex1 = await api.ask(colorA.id, "How should I balance these colors?");
  const ex2 = await api.ask(line.id, "Is this silhouette readable?");

  await api.activate(project.id, colorA.id);
  const tree = await api.getTree(project.id);
  return { projectId: project.id, tree, exchanges: [ex1, ex2] };
}

/** Mount the app into a brand-new document, as a freshly loaded page would. */
async function mount(server: TestServer, projectId: string) {
  const win = new Window();
  (globalThis as Record<string, unknown>).document = win.document;
  const root = win.document.createElement("div");
  root.id = "app";
  win.document.body.appendChild(root);
  const app = await App.load(
    root as unknown as HTMLElement,
    server.api,
    projectId
  );
  return { app, root, win };
}

describe("hard reload rebuilds the view from the API alone", () => {
  let server: TestServer;
  let session: SessionResult;

  beforeAll(async () => {
    server = await startServer();
    session = await runScriptedSession(server);
  }, 120000);

  afterAll(() => {
    server.stop();
    delete (globalThis as Record<string, unknown>).document;
  });

  it("canvas shows the active node's image and stage", async () => {
    const { root } = await mount(server, session.projectId);
    const activeNode = session.tree.nodes.find(
      (n) => n.id === session.tree.active
    )!;
    const img = root.querySelector(".node-image") as unknown as {
      dataset: Record<string, string>;
    };
    expect(img.dataset.digest).toBe(activeNode.image);
    const current = root.querySelector(".stage-badge.current")!;
    expect((current as unknown as { dataset: Record<string, string> }).dataset.stage).toBe(
      activeNode.stage
    );
  }, 30000);

  it("chat history is rebuilt, newest last, with sources", async () => {
    const { root } = await mount(server, session.projectId);
    const entries = Array.from(root.querySelectorAll(".chat-exchange"));
    expect(entries.length).toBe(session.exchanges.length);
    session.exchanges.forEach((exchange, i) => {
      const entry = entries[i] as unknown as {
        dataset: Record<string, string>;
        querySelector: (sel: string) => { textContent: string | null } | null;
      };
      expect(entry.dataset.exchangeId).toBe(exchange.id);
      expect(entry.querySelector(".chat-question")?.textContent).toBe(
        exchange.context.question
      );
      expect(entry.querySelector(".chat-answer")?.textContent).toBe(
        exchange.answer
      );
      expect(entry.querySelector(".chat-source")?.textContent).toBe(
        exchange.source
      );
    });
  }, 30000);

  it("tree renders every node with the active one marked", async () => {
    const { root } = await mount(server, session.projectId);
    const items = Array.from(root.querySelectorAll(".tree-node"));
    expect(items.length).toBe(session.tree.nodes.length);
    const renderedIds = items
      .map((el) => (el as unknown as { dataset: Record<string, string> }).dataset.nodeId)
      .sort();
    expect(renderedIds).toEqual(session.tree.nodes.map((n) => n.id).sort());
    const active = root.querySelector(".tree-node.active") as unknown as {
      dataset: Record<string, string>;
    };
    expect(active.dataset.nodeId).toBe(session.tree.active);
  }, 30000);

  it("two independent mounts produce identical markup", async () => {
    const first = await mount(server, session.projectId);
    const firstHtml = first.root.innerHTML;
    const second = await mount(server, session.projectId);
    expect(second.root.innerHTML).toBe(firstHtml);
    expect(firstHtml).toContain("chat-exchange");
    expect(firstHtml).toContain("tree-node");
  }, 30000);
});
