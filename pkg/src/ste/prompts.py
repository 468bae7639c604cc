"""Prompt templates for exploration, memory, filtering, paraphrasing and ICL."""

from __future__ import annotations

EXPLORE_HEADER = (
    "Your task is to answer the user's query as best you can. You have access to the following tools "
    "which you can use via API call to help with your response:\n\n"
    "{api_descriptions}\n\n"
    "Now you have the chance to explore the available APIs. You can do this by 1) synthesizing some "
    "natural user query that calling the API could help, and 2) trying to respond to the user query "
    "with the help of the APIs. Here, you can focus on queries that only require calling the API once."
)

FIRST_SYNTHESIZE = (
    "Now, first input your synthesized user query. You should make the query natural - for example, try "
    "to avoid using the provided API descriptions or API names in the query, as the user does not know "
    "what APIs you have access to. Also, try to make the query as specific as possible. Input just the "
    "user query alone; do NOT solve the query for now.\n\n"
    "User Query:"
)

NEXT_SYNTHESIZE = (
    "Now you know a bit more about the API. You can synthesize another user query to explore the API a "
    "bit further and consolidate your understanding of the API, based on things that you discovered "
    "about this API. Again, just input the user query alone; do NOT solve the query for now.\n\n"
    "User Query:"
)

ARGUMENT_FORMAT = 'Action Input:\n{\n   "key_1": "value_1",\n   ...\n   "key_n": "value_n"\n}'

REACT_FORMAT = (
    "Thought: you should always think about what to do next\n"
    "Action: the API function name\n"
    "Action Input: the input parameters of the API call in json string format\n"
    "Observation: the return result of the API call. This is what I will provide you with; you do not "
    "need to repeat it in your response.\n"
    "... (this Thought/Action/Action Input/Observation can repeat N times)\n"
    "Thought: I now know the final answer\n"
    "Final Answer: the response to the user query"
)

FINALIZE_HINT = "Thought: I now know the final answer\nFinal Answer:"

FIRST_ACT = (
    "Now, try to respond to the query using the available APIs.\n\n"
    "The format you use the API is by specifying 1) Action: the API function name you'd like to call "
    "2) Action Input: the input parameters of the API call in a json string format. The result of the "
    'API call will be returned starting with "Observation:". Remember that you should only perform a '
    "SINGLE action at a time, do NOT return a list of multiple actions.\n\n"
    "Reminder:\n"
    '1) the only values that should follow "Action:" are: {api_names}\n'
    "2) use the following json string format for the API arguments:\n\n"
    + ARGUMENT_FORMAT.replace("{", "{{").replace("}", "}}")
    + "\n\nRemember to ALWAYS use the following format:\n\n"
    + REACT_FORMAT
    + '\n\nBegin! Remember that your response should never start with "Observation:" since that is '
    "what I will provide you with. Once you have enough information, please immediately use \n"
    + FINALIZE_HINT
    + "\n\nUser Query (the same you just synthesized): {query}"
)

NEXT_ACT = (
    "Now try to solve the query using the API. Remember to follow the same format, i.e,\n"
    "Thought:\nAction:\nAction Input:\nObservation:\nFinal Answer:"
)

REFLECT = 'Do you think you successfully answered this query in the end? Respond with "Yes" or "No".'

FORCE_FINALIZE = (
    "You have reached the maximum number of API calls for this query. "
    "Do not call the API again; please immediately use Thought: I now know the final answer\n"
    "Final Answer:"
)

NO_FEEDBACK_FINALIZE = (
    "Without waiting for the result of your API call, now respond to the user query. "
    "Please immediately use Thought: I now know the final answer\nFinal Answer:"
)

LTM_HEADER = (
    "Below are queries you have already explored and whether you successfully solved them with the "
    "API's help:"
)
LTM_FOOTER = (
    "Based on these, try to explore queries that can help you understand the API further; avoid "
    "synthesizing queries that are too close to the existing ones."
)

FILTER = (
    "An assistant is trying to respond to the user query with the help of some APIs. The APIs that the "
    "assistant has access to are as follows:\n\n"
    "{api_descriptions}\n\n"
    "Now, your task is to evaluate how well the assistant did the job. Check carefully the following "
    "aspects of the assistant's response:\n\n"
    "1) whether the response answers the user's query in an informative way. For example, if the API "
    "calls are unsuccessful and the agent can't find the answer to the request, you should say \"No.\"\n"
    "2) whether the response is faithful with respect to the execution results of the API calls. The "
    "response should not include information that cannot be supported by the API call feedback,\n"
    "3) whether the assistant used the API calls appropriately. For example, the assistant should always "
    "use relevant API calls for queries about up-to-date information or complex calculations,\n\n"
    'For each of the three aspects, you should say "Yes" or "No" indicating whether the assistant did a '
    "good job in that aspect, and explain the reason behind your judgment. Your output should follow "
    'the format below, where "<explanation>" should be your actual explanation for the corresponding '
    "judgment:\n\n"
    "1) Yes/No. <explanation>\n2) Yes/No. <explanation>\n3) Yes/No. <explanation>\n\n"
    "Now, the user query is: \n\n{query}\n\n"
    "The assistant's API calls and the corresponding execution results are:\n\n{chains}\n\n"
    "The assistant's final response is: \n{final_ans}\n\n"
    "Now, your evaluation is (remember to follow the previous format): "
)

PARAPHRASE_FIRST = (
    "Below you will be given a user query. Try to paraphrase it in a different way while preserving its "
    "meaning. The query is:\n{query}\nYour paraphrase of the query: "
)
PARAPHRASE_AGAIN = (
    "Can you try to paraphrase it again in a new way? Avoid coming up with something too close to your "
    "previous ones. Your paraphrase:"
)

ARG_JUDGE = (
    "A user asked: {query}\n"
    'For the API parameter "{param}", the reference argument value is:\n{gold}\n'
    "A model predicted this value instead:\n{pred}\n"
    'Does the predicted value express the same request as the reference? Respond with "Yes" or "No".'
)

ICL_HEADER = (
    "Your task is to answer the user's query as best you can. You have access to the following tools "
    "which you can use via API call to help with your response:\n\n{api_descriptions}"
)
ICL_DEMOS = "Here are some examples of user queries and how the APIs are used to respond to them:"
ICL_QUERY = (
    "Now respond to the following user query. Specify 1) Action: the API function name you'd like to "
    "call 2) Action Input: the input parameters of the API call in a json string format. Only perform a "
    "SINGLE action, using the format:\n"
    "Thought: you should always think about what to do next\n"
    "Action: the API function name\n"
    "Action Input: the input parameters of the API call in json string format\n\n"
    "User Query: {query}"
)

FINETUNE_INSTRUCTION = (
    "Your task is to answer the user's query as best you can, calling one of your APIs when it helps. "
    "Use the format Action/Action Input, then give the Final Answer."
)
