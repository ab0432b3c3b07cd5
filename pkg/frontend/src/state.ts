// Session state machine. Phases advance strictly
// questionnaire -> (reading -> streaming -> rating) x N -> done,
// and no UI path can submit an item before its stream's terminal
// event or after it has already been recorded.

import type { PlanItem, SessionPlan, Scores, StreamEvent } from "./api.js";

export type Phase = "questionnaire" | "reading" | "streaming" | "rating" | "done";

export const DIMENSIONS = ["overall", "content", "response"] as const;
export type Dimension = (typeof DIMENSIONS)[number];

export interface IntegrityError {
  kind: "count-mismatch";
  received: number;
  declared: number;
}

export class SessionController {
  phase: Phase = "questionnaire";
  plan: SessionPlan | null = null;
  currentIndex = 0;
  submitted: boolean[] = [];
  transcript: string[] = [];
  declaredCount: number | null = null;
  integrityError: IntegrityError | null = null;
  selection: Partial<Record<Dimension, number>> = {};

  /** Called once the questionnaire has produced a session plan. */
  beginSession(plan: SessionPlan): void {
    if (this.phase !== "questionnaire") {
      throw new Error(`cannot begin a session from phase ${this.phase}`);
    }
    this.plan = plan;
    this.submitted = plan.items.map(() => false);
    this.currentIndex = 0;
    this.phase = plan.items.length > 0 ? "reading" : "done";
  }

  currentItem(): PlanItem {
    if (!this.plan) throw new Error("no active plan");
    const item = this.plan.items[this.currentIndex];
    if (!item) throw new Error(`no item at index ${this.currentIndex}`);
    return item;
  }

  /** The rater confirms having read the question; streaming may start. */
  startStreaming(): void {
    if (this.phase !== "reading") {
      throw new Error(`cannot start streaming from phase ${this.phase}`);
    }
    this.transcript = [];
    this.declaredCount = null;
    this.integrityError = null;
    this.selection = {};
    this.phase = "streaming";
  }

  /** Feed one wire event. Returns true once the terminal event arrived. */
  onStreamEvent(event: StreamEvent): boolean {
    if (this.phase !== "streaming") {
      throw new Error(`stream event outside streaming phase (${this.phase})`);
    }
    if (event.kind === "token") {
      this.transcript.push(event.token);
      return false;
    }
    if (event.count !== this.transcript.length) {
      this.integrityError = {
        kind: "count-mismatch",
        received: this.transcript.length,
        declared: event.count,
      };
      return true; // stream ended, but the item stays unsubmittable
    }
    this.phase = "rating";
    return true;
  }

  /** The stream broke before its terminal event: mark for re-stream. */
  onStreamInterrupted(): void {
    if (this.phase !== "streaming") return;
    this.transcript = [];
    this.declaredCount = null;
    this.phase = "reading";
  }

  transcriptText(): string {
    return this.transcript.join("");
  }

  selectScore(dimension: Dimension, value: number): void {
    if (this.phase !== "rating") {
      throw new Error("scores can only be selected on the rating form");
    }
    if (!Number.isInteger(value) || value < 1 || value > 5) {
      throw new Error(`score must be an integer in 1..5, got ${value}`);
    }
    this.selection[dimension] = value;
  }

  /** The rating form is enabled only after a clean terminal event. */
  ratingEnabled(): boolean {
    return this.phase === "rating" && this.integrityError === null;
  }

  canSubmit(): boolean {
    return (
      this.ratingEnabled() &&
      !this.submitted[this.currentIndex] &&
      DIMENSIONS.every((dim) => this.selection[dim] !== undefined)
    );
  }

  pendingScores(): Scores {
    if (!this.canSubmit()) throw new Error("submission is not allowed right now");
    return {
      overall: this.selection.overall!,
      content: this.selection.content!,
      response: this.selection.response!,
    };
  }

  /** Record a successful submission and advance to the next item. */
  onSubmitted(): void {
    if (this.phase !== "rating") {
      throw new Error(`cannot record a submission in phase ${this.phase}`);
    }
    this.submitted[this.currentIndex] = true;
    this.selection = {};
    this.transcript = [];
    if (this.currentIndex + 1 < (this.plan?.items.length ?? 0)) {
      this.currentIndex += 1;
      this.phase = "reading";
    } else {
      this.phase = "done";
    }
  }

  /** The server refused the rating as already recorded: move on. */
  onAlreadyRecorded(): void {
    if (this.phase === "rating") this.onSubmitted();
  }

  progress(): { done: number; total: number } {
    return {
      done: this.submitted.filter(Boolean).length,
      total: this.plan?.items.length ?? 0,
    };
  }
}
