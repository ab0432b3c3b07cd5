// DOM rendering and event wiring. All session rules live in the
// controller; this file only reflects its state and forwards intents.

import { ApiError, SessionApi, type SessionPlan } from "./api.js";
import { MBTI_AXES, composeMbti, type AxisSelection } from "./mbti.js";
import { DIMENSIONS, SessionController, type Dimension } from "./state.js";

interface ContentEntry {
  question_id: string;
  question_text: string;
}

const DIMENSION_LABELS: Record<Dimension, string> = {
  overall: "Overall impression",
  content: "Content quality",
  response: "Perceived responsiveness",
};

export class App {
  private controller = new SessionController();
  private questions = new Map<string, string>();
  private root: HTMLElement;

  constructor(
    private api: SessionApi,
    root: HTMLElement,
    private contentUrl: string = "./content.json",
  ) {
    this.root = root;
  }

  async start(): Promise<void> {
    try {
      const response = await fetch(this.contentUrl);
      if (response.ok) {
        const body = await response.json();
        for (const q of body.questions as ContentEntry[]) {
          this.questions.set(q.question_id, q.question_text);
        }
      }
    } catch {
      // question texts are a static deployment asset; ids still render
    }
    this.renderQuestionnaire();
  }

  private clear(): HTMLElement {
    this.root.innerHTML = "";
    return this.root;
  }

  private banner(parent: HTMLElement): HTMLElement {
    const div = document.createElement("div");
    div.className = "banner";
    div.hidden = true;
    parent.appendChild(div);
    return div;
  }

  private showError(banner: HTMLElement, message: string): void {
    banner.textContent = message;
    banner.hidden = false;
  }

  // -- questionnaire ------------------------------------------------------

  private renderQuestionnaire(): void {
    const root = this.clear();
    const form = document.createElement("form");
    form.className = "card";
    form.innerHTML = "<h2>Before you start</h2>";
    const errorLine = this.banner(form);

    const axisSelection: AxisSelection = [null, null, null, null];
    MBTI_AXES.forEach((axis, i) => {
      const row = document.createElement("fieldset");
      row.innerHTML = `<legend>${axis.label} (${axis.key})</legend>`;
      for (const letter of axis.letters) {
        const label = document.createElement("label");
        const input = document.createElement("input");
        input.type = "radio";
        input.name = `axis-${i}`;
        input.value = letter;
        input.addEventListener("change", () => {
          axisSelection[i] = letter;
        });
        label.append(input, ` ${letter}`);
        row.appendChild(label);
      }
      form.appendChild(row);
    });

    const patienceRow = document.createElement("fieldset");
    patienceRow.innerHTML = "<legend>Patience (1 = none, 5 = endless)</legend>";
    const patience = document.createElement("input");
    patience.type = "range";
    patience.min = "1";
    patience.max = "5";
    patience.step = "1";
    patience.value = "3";
    const patienceValue = document.createElement("output");
    patienceValue.textContent = "3";
    patience.addEventListener("input", () => {
      patienceValue.textContent = patience.value;
    });
    patienceRow.append(patience, patienceValue);
    form.appendChild(patienceRow);

    const langRow = document.createElement("fieldset");
    langRow.innerHTML = "<legend>Language</legend>";
    const language = document.createElement("select");
    for (const code of ["en", "zh"]) {
      const option = document.createElement("option");
      option.value = code;
      option.textContent = code;
      language.appendChild(option);
    }
    langRow.appendChild(language);
    form.appendChild(langRow);

    const submit = document.createElement("button");
    submit.type = "submit";
    submit.textContent = "Start session";
    form.appendChild(submit);

    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      const mbti = composeMbti(axisSelection);
      if (!mbti) {
        this.showError(errorLine, "Pick one letter on every axis.");
        return;
      }
      submit.disabled = true;
      try {
        const profile = await this.api.registerRater({
          language: language.value,
          mbti,
          patience: Number(patience.value),
        });
        const plan = await this.api.createSession(profile.rater_id);
        this.controller.beginSession(plan);
        this.renderItem();
      } catch (error) {
        // keep the filled-in form so the rater can simply retry
        this.showError(errorLine, describe(error));
        submit.disabled = false;
      }
    });

    root.appendChild(form);
  }

  // -- item flow ----------------------------------------------------------

  private renderItem(): void {
    if (this.controller.phase === "done") {
      this.renderDone();
      return;
    }
    const root = this.clear();
    const card = document.createElement("div");
    card.className = "card";
    const { done, total } = this.controller.progress();
    const item = this.controller.currentItem();
    const heading = document.createElement("h2");
    heading.textContent = `Item ${this.controller.currentIndex + 1} of ${total}`;
    const progress = document.createElement("p");
    progress.className = "muted";
    progress.textContent = `${done} rated so far`;
    const question = document.createElement("p");
    question.className = "question";
    question.textContent =
      this.questions.get(item.question_id) ?? `Question ${item.question_id}`;
    card.append(heading, progress, question);

    const errorLine = this.banner(card);
    const startButton = document.createElement("button");
    startButton.textContent = "Start — I have read and understood the question";
    card.appendChild(startButton);

    const transcript = document.createElement("div");
    transcript.className = "transcript";
    transcript.hidden = true;
    const cursor = document.createElement("span");
    cursor.className = "cursor";
    card.appendChild(transcript);

    startButton.addEventListener("click", async () => {
      startButton.remove();
      transcript.hidden = false;
      transcript.append(cursor);
      this.controller.startStreaming();
      try {
        await this.api.streamItem(
          this.controller.plan!.session_id,
          this.controller.currentIndex,
          (event) => {
            const finished = this.controller.onStreamEvent(event);
            if (event.kind === "token") {
              cursor.before(document.createTextNode(event.token));
            }
            if (finished) {
              cursor.remove();
              if (this.controller.integrityError) {
                this.showError(
                  errorLine,
                  `Stream integrity check failed: received ` +
                    `${this.controller.integrityError.received} tokens, ` +
                    `server declared ${this.controller.integrityError.declared}. ` +
                    `This item cannot be rated.`,
                );
              } else {
                this.renderRatingForm(card);
              }
            }
          },
        );
      } catch (error) {
        this.controller.onStreamInterrupted();
        this.showError(errorLine, `Stream interrupted (${describe(error)}).`);
        this.renderItem(); // back to the reading phase for a re-stream
      }
    });

    root.appendChild(card);
  }

  private renderRatingForm(card: HTMLElement): void {
    const form = document.createElement("form");
    form.className = "rating";
    const errorLine = this.banner(form);
    const submit = document.createElement("button");
    submit.type = "submit";
    submit.textContent = "Submit rating";
    submit.disabled = true;

    for (const dimension of DIMENSIONS) {
      const row = document.createElement("fieldset");
      row.innerHTML = `<legend>${DIMENSION_LABELS[dimension]}</legend>`;
      for (let value = 1; value <= 5; value++) {
        const label = document.createElement("label");
        const input = document.createElement("input");
        input.type = "radio";
        input.name = dimension;
        input.value = String(value);
        input.addEventListener("change", () => {
          this.controller.selectScore(dimension, value);
          submit.disabled = !this.controller.canSubmit();
        });
        label.append(input, ` ${value}`);
        row.appendChild(label);
      }
      form.appendChild(row);
    }
    form.appendChild(submit);

    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      if (!this.controller.canSubmit()) return;
      submit.disabled = true;
      try {
        await this.api.submitRating(
          this.controller.plan!.session_id,
          this.controller.currentIndex,
          this.controller.pendingScores(),
        );
        this.controller.onSubmitted();
        this.renderItem();
      } catch (error) {
        if (error instanceof ApiError && error.code === "duplicate-submission") {
          this.showError(errorLine, "Already recorded on the server; moving on.");
          this.controller.onAlreadyRecorded();
          this.renderItem();
          return;
        }
        this.showError(errorLine, describe(error));
        submit.disabled = !this.controller.canSubmit();
      }
    });

    card.appendChild(form);
  }

  private renderDone(): void {
    const root = this.clear();
    const card = document.createElement("div");
    card.className = "card";
    const { done, total } = this.controller.progress();
    card.innerHTML =
      `<h2>All done — thank you!</h2>` +
      `<p>You rated ${done} of ${total} items in this session.</p>`;
    root.appendChild(card);
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.code}: ${error.detail}`;
  if (error instanceof Error) return error.message;
  return String(error);
}

export type { SessionPlan };
