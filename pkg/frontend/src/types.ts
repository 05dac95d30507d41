// Wire types mirroring the server's JSON documents.

export type Stage = "rough" | "line" | "color" | "finish";
export type NodeStatus = "draft" | "pending" | "completed" | "failed";

export const STAGE_ORDER: Stage[] = ["rough", "line", "color", "finish"];

export interface ProjectDoc {
  id: string;
  theme: string;
  width: number;
  height: number;
  created_at: number;
  root_node: string;
  active_node: string;
}

export interface NodeDoc {
  id: string;
  project_id: string;
  parent: string | null;
  stage: Stage;
  prompt: string;
  seed: number;
  params: {
    strength: number;
    control_strength: number;
    palette_hint: number[][];
    style_tags: string[];
  };
  image: string | null;
  control_image: string | null;
  mask: string | null;
  status: NodeStatus;
  created_at: number;
  label: string | null;
}

export interface TreeDoc {
  project: ProjectDoc;
  nodes: NodeDoc[];
  edges: [string, string][];
  active: string;
}

export interface CompareDoc {
  node_a: string;
  node_b: string;
  digest_a: string;
  digest_b: string;
  prompt_a: string;
  prompt_b: string;
  params_changed: Record<string, [unknown, unknown]>;
  prompt_diff: { removed: string[]; added: string[] };
  lca: string;
  pixel_diff_count: number;
}

export interface ExchangeDoc {
  id: string;
  node_id: string;
  context: {
    project_theme: string;
    stage: Stage;
    node_prompt: string;
    recent_actions: string[];
    question: string;
  };
  answer: string;
  source: "offline" | "remote_llm";
  created_at: number;
}

export interface EventDoc {
  seq: number;
  kind: string;
  at: number;
  payload: Record<string, unknown>;
}

export interface JobDoc {
  id: string;
  node_id: string;
  state: "queued" | "running" | "done" | "failed";
  error: string | null;
  submitted_at: number;
  finished_at: number | null;
}

export interface ApiErrorDoc {
  code: string;
  message: string;
  details: unknown;
}
