"""Prompt templates for every LLM-facing stage.

Output-format anchors in these templates (block labels, tag names, JSON
shapes) are load-bearing: the parsers in insights.py, questions.py and
judging.py depend on them byte for byte. Domain wording is parameterized so
the pipeline can be pointed at fields other than the default one.
"""

from __future__ import annotations

DEFAULT_DOMAIN = "single-cell RNA sequencing biology"

# ---------------------------------------------------------------------------
# Insight extraction
# ---------------------------------------------------------------------------

INSIGHT_EXTRACTOR_SYSTEM = (
    "You are a scientific research assistant with expertise in interpreting "
    "and analyzing high-impact scientific publications."
)

INSIGHT_EXTRACTOR_TEMPLATE = """You will be provided with a research article in the field of {domain} that presents novel findings.

Your task is to extract {count} distinct, non-overlapping key insights grounded specifically in the authors' analysis and interpretation of their data, rather than general background or established facts. Each insight must be analytically derived, emphasizing conclusions, patterns, or implications the authors draw from their results.

A high-level insight is a concise, meaningful takeaway capturing a core contribution or finding of the study. Such insights typically appear in the abstract, discussion or conclusion sections, summaries within results or figure legends, and syntheses of experimental findings. They should clarify what was found, why it matters, and how the authors arrived at the conclusion.

Task instructions:

Extract and rank {count} insights by importance, using this structured format for each:

Insight #X
Summary:
A clear, concise (1-3 sentences) paraphrased summary of the insight, capturing a key finding, interpretation, or contribution.
How it was derived:
A brief paragraph (3-5 sentences) detailing how the insight was obtained, focusing on information sufficient to reproduce the analysis: experimental and computational methods used, key data trends or statistical comparisons, supporting figures or quantitative evidence, and the authors' interpretations.
Relevant text paragraphs:
Up to 10-15 sentences from the article that underpin the insight, for context. Replicate the original text as closely as possible; this should reflect the authors' own words, not your paraphrasing.

Content prioritization — when reading the article, prioritize these sections in order:
1. Abstract — overarching goals and headline findings
2. Main Results — detailed data, trends, and discoveries
3. Figures and Figure Legends — visual summaries and experimental design
4. Discussion — interpretations, implications, future directions
5. Methods — how insights were generated

Additional guidelines:
- Use paraphrasing to avoid direct quotes in summaries and derivations.
- Ensure each insight stands alone and is understandable without the full article.
- Favor insights that reveal cause-effect relationships, highlight unexpected results, synthesize multiple lines of evidence, or introduce novel techniques.
- Exclude formatting artifacts (page numbers, citation codes, etc.).
- If the study has multiple sub-experiments or datasets, derive at least one insight from each.
- Do not fabricate or simulate insights not explicitly present in the article.

Now, carefully review the article below and generate {count} insights using this structure and guidelines.

Article:

{paper_text}
"""

REPAIR_INSIGHTS_TEMPLATE = """Your previous reply did not follow the required output format. Reformat your {count} insights exactly as:

Insight #X
Summary:
...
How it was derived:
...
Relevant text paragraphs:
...

Produce exactly {count} insights with all three labeled fields each, and no other text.

Previous reply:

{previous}
"""

# ---------------------------------------------------------------------------
# Code description
# ---------------------------------------------------------------------------

CODE_DESCRIBER_SYSTEM = "You are a senior research-software analyst."

CODE_DESCRIBER_TEMPLATE = """Task: You will receive {n} source-code files, each delimited like this:

### BEGIN <relative/path/to/file.ext>
<full file content>
### END <relative/path/to/file.ext>

For each file produce a single, well-structured paragraph (3-6 sentences) that:
- names the main functions / classes / entry points
- states the scientific or analytic goal the script helps achieve
- notes crucial implementation details (e.g. I/O formats, key algorithms, dependencies, or domain-specific nuances)

Output format:
Return one JSON dictionary whose keys are the exact file paths and whose values are your paragraphs, e.g.

{{
  "analysis/load_data.R": "This script ...",
  "simulation/core.py": "This module ..."
}}

Files:

{bundle}
"""

REPAIR_DESCRIPTIONS_TEMPLATE = """Your previous reply was not a JSON dictionary covering every file path. Return one JSON object whose keys are exactly these paths and whose values are description paragraphs, with no other text:

{paths}

Previous reply:

{previous}
"""

# ---------------------------------------------------------------------------
# Code matching
# ---------------------------------------------------------------------------

CODE_MATCHER_SYSTEM = (
    "You are an expert research assistant helping to link research insights "
    "with relevant analysis scripts."
)

CODE_MATCHER_TEMPLATE = """You are given:
1. A high-level insight, which includes a summary capturing the main finding, a description detailing how the insight was derived (techniques, key entities, analyses), and a relevant-text section with supporting paragraphs from the article.
2. A list of code files, each with a file path and a description of what the script does.

Task instructions:
- Carefully read the insight's description and match it with the most relevant code files based on the type of analysis, data focus, and outputs mentioned.
- Return only a valid Python list of up to 5 string file paths that are most relevant to the insight above, most relevant first. Do not include explanations, just the list.
- Avoid faking or simulating file paths. Stay true and rigorous.

Insight summary:
{summary}

Insight derivation:
{derivation}

Relevant text:
{grounding_text}

Code files:
{descriptions}
"""

REPAIR_MATCH_TEMPLATE = """Your previous reply was not a valid list of at most 5 file paths drawn from the provided files. Reply with only a Python list of up to 5 existing file paths, nothing else.

Previous reply:

{previous}
"""

# ---------------------------------------------------------------------------
# Workflow generation
# ---------------------------------------------------------------------------

CODE_GENERATOR_SYSTEM = (
    "You are a highly skilled research-computing assistant. Your task is to "
    "generate a structured JSON output that contains code and detailed "
    "reasoning to reproduce a specific finding."
)

CODE_GENERATOR_TEMPLATE = """You are provided with:
1. A high-level insight: a summary (concise statement of the finding), a description (how the finding was derived), and supporting paragraphs from the article.
2. A dictionary of relevant code files: keys are file paths, values are full file contents.

Your task:
- Analyze the insight carefully to understand the exact finding and how it was derived.
- Read and extract ideas from the relevant scripts, identifying reusable logic, processing steps, parameters, and visualizations.
- Then write your own code in {language} that operates on a preloaded data object to reproduce this insight. You can name the data object `adata`.
- Your code must be enclosed using the <execute> tag, for example: <execute> print("Hello World!") </execute>. IMPORTANT: You must end the code block with the </execute> tag.
- Organize the code into self-contained code blocks, where each block represents one logical step.
- You may assume the `adata` object is already loaded in memory; do not include code for loading it.
- Ground your solution in techniques, variable names, or logic from the scripts, but synthesize new code, not copy-paste.
- Do not assume columns are in any fixed order; locate columns by their exact names.

Final output format:
```json
{{
  "summary": "...",
  "code_blocks": [
    {{
      "code": "<execute> ... </execute>",
      "reasoning": "...",
      "derived_from": ["path/to/file1.py"]
    }}
  ]
}}
```

Insight summary:
{summary}

Insight derivation:
{derivation}

Relevant text:
{grounding_text}

Relevant code files:
{file_contents}

Repository tree:
{tree}
"""

REPAIR_WORKFLOW_TEMPLATE = """Your previous reply was not valid JSON with a "code_blocks" list of objects holding "code", "reasoning" and "derived_from" fields, with each code value wrapped in <execute>...</execute> tags. Reply with only the corrected JSON.

Previous reply:

{previous}
"""

# ---------------------------------------------------------------------------
# Question generation
# ---------------------------------------------------------------------------

_QUESTION_PREAMBLE = """I am designing assignments for my PhD students on {domain} data. The assignment is based on a published scientific article presenting new research findings. The students will receive a dataset from the article but not the article itself, so they must rely on their analytical skills and understanding of the data rather than recalling the article's conclusions or general knowledge.

I will provide a key insight extracted from the article. It contains a summary, the description of how the insight was derived by the authors, and the associated paragraphs from the article that support it."""

OEQ_GENERATION_TEMPLATE = _QUESTION_PREAMBLE + """

Your task:
- Create two (2) open-ended questions that assess the students' ability to reason through the data to reach similar conclusions. The questions should together cover different aspects of the insight and its derivation, and must remain strictly grounded in the provided insight without introducing hallucinations.
- Questions should be designed mostly from the derivation of the insight, not simple factual recall of its summary.
- Provide the correct answer immediately after each question, based strictly on the dataset-derived insight.
- Answers should focus on the findings themselves and must not mention the specific methods or tools used to obtain them (e.g., SCENIC, differential gene expression analysis, CellDB).
- Do not combine two sub-questions into one; split them into separate, single-focus questions.
- Questions should go beyond simple yes/no or increase/decrease answers and should not specify the method by which the answer must be obtained.

Output format — provide the question and the answer exactly as follows, with no additional text before or after:

Insight: [restate the insight summary]
Question1: [your question]
Answer1: [answer based on the dataset/insight]
Question2: [your question]
Answer2: [answer based on the dataset/insight]

The insight:

Summary: {summary}

How it was derived: {derivation}

Relevant paragraphs: {grounding_text}

Please generate two (2) open-ended questions with their answers following the above instructions.
"""

MCQ_GENERATION_TEMPLATE = _QUESTION_PREAMBLE + """

Your task:
- Create two (2) multiple-choice questions that assess the students' ability to reason through the data to reach similar conclusions. The questions should together cover different aspects of the insight and its derivation, strictly grounded in the provided insight.
- Questions should be designed mostly from the derivation of the insight, not simple factual recall of its summary.
- Wrong answers should simulate realistic misinterpretations of the data, premature conclusions, or confusions between similar entities: plausible but tricky hard negatives, not obviously false options.
- Questions can be single-answer (one correct option) or multiple-answer (more than one correct option). If the answer has multiple correct parts, split it across options and make the correct answer a combination, e.g. "A,C" or "B,D".
- Randomize the position of the correct answer(s) among the options.
- Use neutral language focused on data interpretation ("the data indicate", "analysis of the dataset suggests") and do not specify the exact analysis methods to use.

Output format — provide each question and its answer exactly as follows, with no additional text before or after:

Insight: [restate the insight summary]
Question1: [your question]
A) [Option A]
B) [Option B]
C) [Option C]
D) [Option D]
Answer1: [Correct option(s) here, e.g., "A,C"]
Question2: [your question]
A) [Option A]
B) [Option B]
C) [Option C]
D) [Option D]
Answer2: [Correct option(s) here, e.g., "A,C"]

The insight:

Summary: {summary}

How it was derived: {derivation}

Relevant paragraphs: {grounding_text}

Please generate two (2) multiple-choice questions following the above instructions.
"""

REPAIR_QUESTIONS_TEMPLATE = """Your previous reply did not follow the required output format. Reply again using exactly the labeled lines (Insight:, Question1:, Answer1:, Question2:, Answer2:{mcq_extra}), with no other text.

Previous reply:

{previous}
"""

# ---------------------------------------------------------------------------
# Knowledge-recall probes for the auto-filter (question text only, no data)
# ---------------------------------------------------------------------------

RECALL_PROBE_OEQ_TEMPLATE = """Answer the following research question as well as you can from your own knowledge. Give a direct, fact-based answer in a short paragraph.

Question: {question}
"""

RECALL_PROBE_MCQ_TEMPLATE = """Answer the following multiple-choice research question from your own knowledge. Select all correct options.

Question: {stem}

Answer Choices:
{options}

Return the selected options as a comma-separated list of letters wrapped inside XML-style tags <solution> and </solution>.
For example: <solution>A,C</solution>
"""

# ---------------------------------------------------------------------------
# Open-ended answer judging (atomic-fact rubric, 1-5 rating)
# ---------------------------------------------------------------------------

JUDGE_SYSTEM_TEMPLATE = (
    "You are a full professor in {domain} evaluating your PhD student's "
    "responses to questions."
)

JUDGE_RUBRIC_TEMPLATE = """You are grading a PhD student's answer to an open-ended research question about a {domain} dataset.
The task requires analysis of the dataset to derive the answer to the question.
You will be given the student's answer and the ground-truth (GT) answer.

Evaluation steps:

1. Extract atomic facts from the GT and label them F1..Fn.
An atomic fact is a claim that can be objectively verified (including but not limited to: entity/condition, direction or magnitude of change, names of measured features or pathways, statistical evidence, conclusion).

2. For each Fi, classify the student's coverage as:

- PRESENT: fact included with the same meaning AND explicitly tied to dataset-derived quantitative/statistical outputs or dataset-defined identifiers. PRESENT requires evidence that the student directly engaged with the dataset.
- PARTIAL: a fact with the correct meaning but supported only by descriptive knowledge or lists of plausible options, without dataset-level numbers or identifiers; or a fact whose support is vague or hedged ("e.g.", "seems", "maybe", "likely", "generally", "typically"); or a fact that appears to rely solely on general knowledge or recall, without direct reference to the dataset.
- MISSING: fact is not mentioned.
- INCORRECT: wrong fact or fact contradictory to some GT fact.

3. Identify contradictions: any statement in direct conflict with the GT (opposite direction, wrong entity or condition). Contradictions are judged only relative to GT, not outside knowledge. Facts marked MISSING do not count as contradictions; omitting details is not a contradiction.

4. Count the number of GT facts that are PRESENT, PARTIAL, MISSING, or INCORRECT. Evaluate only against parts of the answer that address the GT facts.

5. Review the coverage labels for all GT facts and determine the overall correctness score (1-5) based on the scoring rubric below.

6. Additional information that is not part of GT facts but does not contradict GT does not affect the score.

Scoring (correctness 1-5, integers only):

- 5: All GT facts are marked PRESENT. No facts are MISSING or INCORRECT. No contradictions of GT facts.
- 4: Most or all GT facts are marked PRESENT. Detailed, dataset-grounded analysis is valid even if it does not repeat the GT fact's broader terms, as long as it conveys the same underlying fact. MISSING facts are allowed; INCORRECT facts are not.
- 3: Some GT facts (but not all) are marked PRESENT. At least one GT fact is PARTIAL or MISSING. Minor contradictions of GT facts are allowed.
- 2: No GT facts are marked PRESENT; some are PARTIAL. The answer includes broad or generic options that read like recall rather than dataset evidence. Minor contradictions are allowed.
- 1: All GT facts are MISSING; or most GT facts are INCORRECT; or there are major contradictions of GT; or the student explicitly states inability to answer.

General rules:
- Grade only against the GT answer; ignore outside knowledge.
- Style, length, or phrasing differences do not matter as long as GT facts are covered with dataset grounding.
- Dataset grounding (required for PRESENT) means explicit quantitative/statistical evidence or dataset identifiers (percentages, fold changes, p-values, cluster IDs, scores).
- If a GT fact appears only inside an extensive list of plausible options without dataset-specific grounding, downgrade it from PRESENT to PARTIAL.
- All GT facts are treated equally.

Provided answer:

{answer}

Ground truth answer (GT):

{gt_answer}

Output format:
- Output the numerical rating wrapped in <rating></rating> tags.
- Do not include extra text outside these tags.
- Example:

<rating>3</rating>

Your response:
"""

REPAIR_RATING_TEMPLATE = """Your previous reply did not contain a parseable rating. Reply with only the integer rating wrapped in <rating></rating> tags, e.g. <rating>3</rating>.

Previous reply:

{previous}
"""

# ---------------------------------------------------------------------------
# Relatedness judging (generated insights vs an expert-derived insight)
# ---------------------------------------------------------------------------

RELATEDNESS_SYSTEM = (
    "You are an expert evaluating conceptual alignment between AI-generated "
    "insights and a scientist-derived insight."
)

RELATEDNESS_TEMPLATE = """You will be given a list of generated insights and a single scientist-derived insight.
Your task is to assign a single score according to the following rules.

Scoring (relatedness 1-3, integers only):
- 3 (strongly related): At least one generated insight is strongly related to the scientist-derived insight.
- 2 (weakly related): No strongly related insights, but at least one is related.
- 1 (unrelated): All generated insights are unrelated.

Generated insights:

{generated}

Scientist-derived insight:

{expert}

Output format:
- Output the numerical rating wrapped in <rating></rating> tags.
- After the rating, output an explanation wrapped in <explanation></explanation> tags.
- Do not include extra text outside these tags.
- Example:

<rating>2</rating>
"""

# ---------------------------------------------------------------------------
# Agent task prompts
# ---------------------------------------------------------------------------

AGENT_TASK_OEQ_TEMPLATE = """Task: Analyze the provided dataset and answer the research question.

Input Data:
{data_paths}

Question:
{question}

Output Format:
Return the summary of an answer wrapped inside XML-style tags <solution> and </solution>.

Guidelines for the output format:
- Base the answer strictly on the results derived from the dataset.
- Provide a fact-based summary (not a narrative or manuscript-style report).
- Do not use extra formatting such as bullet points or section headers.
- Include all key findings that directly address the question, emphasizing those most relevant to the answer.
"""

AGENT_TASK_MCQ_TEMPLATE = """Task: Analyze the provided dataset and answer the research question by selecting all correct options.

Input Data:
{data_paths}

Question:
{question}

Answer Choices:
{options}

Output Format:
Return the selected options as a comma-separated list of letters wrapped inside XML-style tags <solution> and </solution>.
For example: <solution>A,C</solution>
"""

# ---------------------------------------------------------------------------
# Agent loop: planner, critic, retriever (written for unambiguous control flow)
# ---------------------------------------------------------------------------

PLANNER_SYSTEM_TEMPLATE = """You are a research analysis agent working on a dataset. You proceed in steps.

On your first reply, produce a numbered analysis plan wrapped in <plan></plan> tags.
On every later reply, do exactly one of:
- run code in the working session by wrapping it in <execute></execute> tags;
- invoke a tool by replying <tool name="TOOL">arguments</tool> using one of the available tools;
- finish by replying with your final answer wrapped in <solution></solution> tags.

Execution feedback for each action is appended to the conversation before your next reply.

Available tools:
{tools}
"""

CRITIC_PLAN_TEMPLATE = """You are a critical reviewer. A colleague proposed the following analysis plan for the task below. Point out concrete gaps, risks, or missing steps, and suggest improvements as actionable feedback. If the plan is sound, reply exactly APPROVED.

Task:
{task}

Proposed plan:
{plan}
"""

CRITIC_END_TEMPLATE = """You are a critical reviewer. A colleague finished an analysis for the task below; their steps and findings are summarized next. Identify key missing parts or ill-formed conclusions and, if needed, suggest a new workflow to address them as actionable feedback. If the analysis is sound, reply exactly APPROVED.

Task:
{task}

Analysis so far:
{summary}
"""

RETRIEVER_TEMPLATE = """Select the tools most relevant to solving the task below. Reply with only a JSON list of tool names drawn from the registry, nothing else.

Task:
{task}

Tool registry:
{tools}
"""

FORCED_ANSWER_PROMPT = (
    "You are out of steps. Reply now with your best final answer wrapped in "
    "<solution></solution> tags and nothing else."
)

REPAIR_SOLUTION_PROMPT = (
    "Your previous reply did not contain <solution></solution> tags. Reply "
    "with only your final answer wrapped in <solution></solution> tags."
)


def format_options(options: dict[str, str]) -> str:
    return "\n".join(f"{letter}) {text}" for letter, text in options.items())
