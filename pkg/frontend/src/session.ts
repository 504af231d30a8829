/**
 * Adaptive questionnaire session: one answer at a time routes down the
 * exported tree, selecting the next question. Supports back navigation,
 * non-committal what-if previews, and an auditable session export.
 *
 * After every state change the session replays its answer trail from the
 * root and verifies it lands on the cursor, so trail and cursor can never
 * silently desynchronize.
 */
import {
  InternalJson,
  TreeDoc,
  TreeNodeJson,
  childOf,
  isLeaf,
  maxDepth,
  parseTreeDoc,
  predictedClass,
  routeSide,
} from "./tree";

export interface AnswerRecord {
  column: number;
  columnName: string;
  answer: number;
  side: "left" | "right";
}

export interface AnswerRejection {
  accepted: false;
  message: string;
}

export interface AnswerAccepted {
  accepted: true;
  complete: boolean;
}

export type AnswerOutcome = AnswerAccepted | AnswerRejection;

export interface WhatIfPreview {
  side: "left" | "right";
  complete: boolean;
  nextQuestion: string | null;
  classProbs: number[] | null;
  remainingMaxDepth: number;
}

export interface SessionExport {
  status: "in-progress" | "complete";
  trail: AnswerRecord[];
  class_probs: number[] | null;
  predicted_class: number | null;
  predicted_label: string | null;
}

interface ColumnBounds {
  lower: number;
  upper: number; // value must satisfy lower < value <= upper
}

export class SessionStateError extends Error {}

export class QuestionnaireSession {
  readonly doc: TreeDoc;
  private nodes: TreeNodeJson[]; // root..cursor inclusive
  private records: AnswerRecord[];

  constructor(doc: TreeDoc) {
    this.doc = doc;
    this.nodes = [doc.root];
    this.records = [];
  }

  static fromJson(text: string): QuestionnaireSession {
    return new QuestionnaireSession(parseTreeDoc(text));
  }

  get cursor(): TreeNodeJson {
    return this.nodes[this.nodes.length - 1];
  }

  get trail(): readonly AnswerRecord[] {
    return this.records;
  }

  get complete(): boolean {
    return isLeaf(this.cursor);
  }

  get classProbs(): number[] | null {
    return isLeaf(this.cursor) ? this.cursor.probs : null;
  }

  /** Column asked at the cursor, or null when the session is complete. */
  currentQuestion(): { column: number; name: string; kind: string; levels?: number } | null {
    const node = this.cursor;
    if (isLeaf(node)) return null;
    const spec = this.doc.schema.columns[node.rule.column];
    return { column: node.rule.column, name: spec.name, kind: spec.kind, levels: spec.levels };
  }

  /** Interval the answered value must fall in, from earlier answers on the column. */
  columnBounds(column: number): ColumnBounds {
    let lower = -Infinity;
    let upper = Infinity;
    for (let i = 0; i < this.records.length; i++) {
      const record = this.records[i];
      const node = this.nodes[i];
      if (isLeaf(node)) throw new SessionStateError("trail longer than path");
      const rule = node.rule;
      if (rule.column !== column) continue;
      if (record.side === "left") upper = Math.min(upper, rule.threshold);
      else lower = Math.max(lower, rule.threshold);
    }
    return { lower, upper };
  }

  private validateAnswer(value: number): string | null {
    const node = this.cursor;
    if (isLeaf(node)) return "session is complete";
    if (!Number.isFinite(value)) return "answer must be a number";
    const spec = this.doc.schema.columns[node.rule.column];
    if (spec.kind === "ordinal") {
      if (!Number.isInteger(value) || value < 0 || value > (spec.levels ?? 0) - 1) {
        return `answer must be an integer level between 0 and ${(spec.levels ?? 0) - 1}`;
      }
    }
    const bounds = this.columnBounds(node.rule.column);
    if (!(value > bounds.lower && value <= bounds.upper)) {
      return `answer contradicts an earlier response (expected in (${bounds.lower}, ${bounds.upper}])`;
    }
    return null;
  }

  /** Commit an answer; on rejection the session state is unchanged. */
  answer(value: number): AnswerOutcome {
    const problem = this.validateAnswer(value);
    if (problem !== null) return { accepted: false, message: problem };
    const node = this.cursor as InternalJson;
    const side = routeSide(node.rule, value);
    this.records.push({
      column: node.rule.column,
      columnName: this.doc.schema.columns[node.rule.column].name,
      answer: value,
      side,
    });
    this.nodes.push(childOf(node, side));
    this.assertTrailConsistent();
    return { accepted: true, complete: this.complete };
  }

  /** Undo the latest answer; no-op at the root. */
  back(): boolean {
    if (this.records.length === 0) return false;
    this.records.pop();
    this.nodes.pop();
    this.assertTrailConsistent();
    return true;
  }

  /** Preview the consequence of an answer without committing it. */
  whatIf(value: number): WhatIfPreview | AnswerRejection {
    const problem = this.validateAnswer(value);
    if (problem !== null) return { accepted: false, message: problem };
    const node = this.cursor as InternalJson;
    const side = routeSide(node.rule, value);
    const child = childOf(node, side);
    if (isLeaf(child)) {
      return {
        side,
        complete: true,
        nextQuestion: null,
        classProbs: child.probs,
        remainingMaxDepth: 0,
      };
    }
    return {
      side,
      complete: false,
      nextQuestion: this.doc.schema.columns[child.rule.column].name,
      classProbs: null,
      remainingMaxDepth: maxDepth(child) - 1,
    };
  }

  /** Replay the trail from the root and compare with the cursor chain. */
  private assertTrailConsistent(): void {
    let node: TreeNodeJson = this.doc.root;
    for (let i = 0; i < this.records.length; i++) {
      if (this.nodes[i] !== node) {
        throw new SessionStateError(`trail desynchronized at step ${i}`);
      }
      if (isLeaf(node)) throw new SessionStateError("answers recorded past a leaf");
      const record = this.records[i];
      const side = routeSide(node.rule, record.answer);
      if (side !== record.side) {
        throw new SessionStateError(`recorded side disagrees with routing at step ${i}`);
      }
      node = childOf(node, side);
    }
    if (this.nodes[this.records.length] !== node) {
      throw new SessionStateError("cursor does not match trail replay");
    }
    if (this.nodes.length !== this.records.length + 1) {
      throw new SessionStateError("trail and cursor chain lengths disagree");
    }
  }

  exportSession(): SessionExport {
    const probs = this.classProbs;
    const predicted = probs === null ? null : predictedClass(probs);
    return {
      status: this.complete ? "complete" : "in-progress",
      trail: [...this.records],
      class_probs: probs,
      predicted_class: predicted,
      predicted_label: predicted === null ? null : this.doc.schema.classes[predicted],
    };
  }
}
