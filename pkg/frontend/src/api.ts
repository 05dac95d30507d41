// Thin fetch wrapper over the server's JSON API. Every mutation the UI can
// perform goes through one of these documented calls; no state is invented
// client-side.

import type {
  ApiErrorDoc,
  CompareDoc,
  EventDoc,
  ExchangeDoc,
  JobDoc,
  NodeDoc,
  ProjectDoc,
  TreeDoc,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly details: unknown;

  constructor(status: number, doc: ApiErrorDoc) {
    super(doc.message);
    this.status = status;
    this.code = doc.code;
    this.details = doc.details;
  }
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(baseUrl = "") {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await fetch(this.baseUrl + path, init);
    if (!resp.ok) {
      let doc: ApiErrorDoc;
      try {
        doc = (await resp.json()) as ApiErrorDoc;
      } catch {
        doc = { code: "illegal_state", message: resp.statusText, details: null };
      }
      throw new ApiError(resp.status, doc);
    }
    return (await resp.json()) as T;
  }

  createProject(
    theme: string,
    opts: { width?: number; height?: number; seed?: number } = {}
  ): Promise<ProjectDoc> {
    return this.request("POST", "/v1/projects", { theme, ...opts });
  }

  getProject(projectId: string): Promise<ProjectDoc> {
    return this.request("GET", `/v1/projects/${projectId}`);
  }

  getTree(projectId: string): Promise<TreeDoc> {
    return this.request("GET", `/v1/projects/${projectId}/tree`);
  }

  getNode(nodeId: string): Promise<NodeDoc> {
    return this.request("GET", `/v1/nodes/${nodeId}`);
  }

  generate(nodeId: string): Promise<JobDoc> {
    return this.request("POST", `/v1/nodes/${nodeId}/generate`);
  }

  advance(
    nodeId: string,
    promptDelta = "",
    seed?: number
  ): Promise<NodeDoc> {
    return this.request("POST", `/v1/nodes/${nodeId}/advance`, {
      prompt_delta: promptDelta,
      seed: seed ?? null,
    });
  }

  regenerate(
    nodeId: string,
    opts: { prompt?: string; seed?: number; params?: object } = {}
  ): Promise<NodeDoc> {
    return this.request("POST", `/v1/nodes/${nodeId}/regenerate`, opts);
  }

  inpaint(nodeId: string, maskB64: string, prompt = ""): Promise<NodeDoc> {
    return this.request("POST", `/v1/nodes/${nodeId}/inpaint`, {
      mask_b64: maskB64,
      prompt,
    });
  }

  activate(projectId: string, nodeId: string): Promise<ProjectDoc> {
    return this.request("POST", `/v1/projects/${projectId}/activate`, {
      node_id: nodeId,
    });
  }

  compare(a: string, b: string): Promise<CompareDoc> {
    return this.request(
      "GET",
      `/v1/compare?a=${encodeURIComponent(a)}&b=${encodeURIComponent(b)}`
    );
  }

  ask(nodeId: string, question: string): Promise<ExchangeDoc> {
    return this.request("POST", "/v1/tutor/ask", {
      node_id: nodeId,
      question,
    });
  }

  blobUrl(digest: string): string {
    return `${this.baseUrl}/v1/blobs/${digest}`;
  }

  async getBlob(digest: string): Promise<Uint8Array> {
    const resp = await fetch(this.blobUrl(digest));
    if (!resp.ok) {
      throw new ApiError(resp.status, {
        code: "not_found",
        message: `blob ${digest}`,
        details: null,
      });
    }
    return new Uint8Array(await resp.arrayBuffer());
  }

  /** Fetch the full event backlog (the stream closes after replay). */
  async getEventBacklog(
    projectId: string,
    afterSeq = -1
  ): Promise<EventDoc[]> {
    const headers: Record<string, string> = {};
    if (afterSeq >= 0) headers["Last-Event-Seq"] = String(afterSeq);
    const resp = await fetch(
      `${this.baseUrl}/v1/projects/${projectId}/events?live=0`,
      { headers }
    );
    if (!resp.ok) {
      const doc = (await resp.json()) as ApiErrorDoc;
      throw new ApiError(resp.status, doc);
    }
    const text = await resp.text();
    return parseSse(text).map((m) => JSON.parse(m.data) as EventDoc);
  }
}

export interface SseMessage {
  id: string | null;
  event: string | null;
  data: string;
}

/** Parse complete text/event-stream content into discrete messages. */
export function parseSse(text: string): SseMessage[] {
  const messages: SseMessage[] = [];
  for (const block of text.split("\n\n")) {
    let id: string | null = null;
    let event: string | null = null;
    const data: string[] = [];
    for (const line of block.split("\n")) {
      if (line.startsWith(":") || line.trim() === "") continue;
      const colon = line.indexOf(":");
      const field = colon === -1 ? line : line.slice(0, colon);
      let value = colon === -1 ? "" : line.slice(colon + 1);
      if (value.startsWith(" ")) value = value.slice(1);
      if (field === "id") id = value;
      else if (field === "event") event = value;
      else if (field === "data") data.push(value);
    }
    if (data.length > 0) {
      messages.push({ id, event, data: data.join("\n") });
    }
  }
  return messages;
}
