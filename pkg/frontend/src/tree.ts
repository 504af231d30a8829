/**
 * Tree export parsing and routing.
 *
 * Consumes the JSON artifact produced by the distillation library: a nested
 * node structure bound to its schema by a SHA-256 digest over the canonical
 * schema serialization. All prediction intelligence stays upstream; this
 * module only walks the exported structure.
 */
import { sha256 } from "js-sha256";

export interface ColumnSpec {
  name: string;
  kind: "continuous" | "ordinal";
  levels?: number;
}

export interface SchemaJson {
  columns: ColumnSpec[];
  classes: string[];
  label_column?: string;
}

export interface SplitRuleJson {
  column: number;
  threshold: number;
}

export interface LeafJson {
  probs: number[];
}

export interface InternalJson {
  rule: SplitRuleJson;
  left: TreeNodeJson;
  right: TreeNodeJson;
  diagnostics?: unknown;
}

export type TreeNodeJson = LeafJson | InternalJson;

export interface TreeDoc {
  format: string;
  version: number;
  schema: SchemaJson;
  schema_digest: string;
  root: TreeNodeJson;
}

export class TreeLoadError extends Error {}

export function isLeaf(node: TreeNodeJson): node is LeafJson {
  return "probs" in node;
}

/** Mirror of the canonical JSON form the digest is computed over upstream:
 *  keys sorted, compact separators. The schema payload holds only strings,
 *  integers and booleans, so JSON.stringify of primitives is exact. */
export function canonicalJson(value: unknown): string {
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (value !== null && typeof value === "object") {
    const keys = Object.keys(value as Record<string, unknown>).sort();
    const body = keys.map(
      (k) => JSON.stringify(k) + ":" + canonicalJson((value as Record<string, unknown>)[k]),
    );
    return "{" + body.join(",") + "}";
  }
  return JSON.stringify(value);
}

export function schemaDigest(schema: SchemaJson): string {
  return sha256(canonicalJson(schema));
}

function validateNode(node: unknown, k: number): TreeNodeJson {
  if (node === null || typeof node !== "object") {
    throw new TreeLoadError("tree node is not an object");
  }
  const candidate = node as Record<string, unknown>;
  if ("probs" in candidate) {
    const probs = candidate.probs;
    if (!Array.isArray(probs) || probs.length !== k || !probs.every((p) => typeof p === "number")) {
      throw new TreeLoadError("leaf probabilities malformed");
    }
    return { probs: probs as number[] };
  }
  const rule = candidate.rule as SplitRuleJson | undefined;
  if (!rule || typeof rule.column !== "number" || typeof rule.threshold !== "number") {
    throw new TreeLoadError("internal node rule malformed");
  }
  return {
    rule,
    left: validateNode(candidate.left, k),
    right: validateNode(candidate.right, k),
    diagnostics: candidate.diagnostics,
  };
}

export function parseTreeDoc(text: string): TreeDoc {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (err) {
    throw new TreeLoadError(`tree file is not valid JSON: ${String(err)}`);
  }
  const doc = raw as Partial<TreeDoc>;
  if (doc.format !== "stabletree-tree") {
    throw new TreeLoadError(`unrecognized format tag: ${String(doc.format)}`);
  }
  if (!doc.schema || !Array.isArray(doc.schema.columns) || !Array.isArray(doc.schema.classes)) {
    throw new TreeLoadError("schema block missing or malformed");
  }
  if (typeof doc.schema_digest !== "string" || schemaDigest(doc.schema) !== doc.schema_digest) {
    throw new TreeLoadError("schema digest mismatch: tree does not belong to its schema");
  }
  const root = validateNode(doc.root, doc.schema.classes.length);
  return {
    format: doc.format,
    version: doc.version ?? 1,
    schema: doc.schema,
    schema_digest: doc.schema_digest,
    root,
  };
}

/** Routing convention shared with the library: value <= threshold goes left. */
export function routeSide(rule: SplitRuleJson, value: number): "left" | "right" {
  return value <= rule.threshold ? "left" : "right";
}

export function childOf(node: InternalJson, side: "left" | "right"): TreeNodeJson {
  return side === "left" ? node.left : node.right;
}

export function maxDepth(node: TreeNodeJson): number {
  if (isLeaf(node)) return 1;
  return 1 + Math.max(maxDepth(node.left), maxDepth(node.right));
}

/** Lowest index wins exact ties, matching the library's argmax rule. */
export function predictedClass(probs: number[]): number {
  let best = 0;
  for (let i = 1; i < probs.length; i++) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}
